"""Float image operations: color conversion, resizing, augmentation.

Images are numpy arrays in (h, w, 3) layout: uint8 for storage, float
in [0, 1] (RGB) for processing. YUV planes use the analog scale where
U spans about [-0.436, 0.436] and V about [-0.615, 0.615].
"""

from __future__ import annotations

import numpy as np

# RGB -> YUV with BT.601 luma weights and analog chroma scaling.
YUV_FROM_RGB = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.14713, -0.28886, 0.436],
        [0.615, -0.51499, -0.10001],
    ],
    dtype=np.float64,
)

# Numeric inverse, computed once at import to full precision.
RGB_FROM_YUV = np.linalg.inv(YUV_FROM_RGB)

# Largest squared singular value of the conversion; bounds the YUV MSE
# in terms of the RGB MSE.
YUV_GAIN_SQ = float(np.linalg.svd(YUV_FROM_RGB, compute_uv=False)[0] ** 2)


def rgb_to_yuv(img: np.ndarray) -> np.ndarray:
    return np.einsum("ij,hwj->hwi", YUV_FROM_RGB, img, optimize=True).astype(img.dtype)


def yuv_to_rgb(img: np.ndarray) -> np.ndarray:
    return np.einsum("ij,hwj->hwi", RGB_FROM_YUV, img, optimize=True).astype(img.dtype)


def to_float(img: np.ndarray, dtype=np.float32) -> np.ndarray:
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")
    return (img.astype(np.float64) / 255.0).astype(dtype)


def to_u8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def _axis_coords(out_size: int, in_size: int):
    # pixel-center convention (align_corners=False)
    x = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    i0 = np.floor(x).astype(np.int64)
    frac = x - i0
    return i0, frac


def _resize_axis_bilinear(img: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = img.shape[axis]
    i0, frac = _axis_coords(out_size, in_size)
    lo = np.clip(i0, 0, in_size - 1)
    hi = np.clip(i0 + 1, 0, in_size - 1)
    a = np.take(img, lo, axis=axis)
    b = np.take(img, hi, axis=axis)
    shape = [1] * img.ndim
    shape[axis] = out_size
    w = frac.reshape(shape)
    return a * (1.0 - w) + b * w


_CR_A = -0.5  # Catmull-Rom


def _cubic_weights(frac: np.ndarray) -> np.ndarray:
    d = np.stack([frac + 1.0, frac, 1.0 - frac, 2.0 - frac])
    ad = np.abs(d)
    w_near = (_CR_A + 2.0) * ad**3 - (_CR_A + 3.0) * ad**2 + 1.0
    w_far = _CR_A * ad**3 - 5.0 * _CR_A * ad**2 + 8.0 * _CR_A * ad - 4.0 * _CR_A
    return np.where(ad <= 1.0, w_near, np.where(ad < 2.0, w_far, 0.0))


def _resize_axis_bicubic(img: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = img.shape[axis]
    i0, frac = _axis_coords(out_size, in_size)
    weights = _cubic_weights(frac)
    out = None
    for tap, off in enumerate((-1, 0, 1, 2)):
        idx = np.clip(i0 + off, 0, in_size - 1)
        term = np.take(img, idx, axis=axis)
        shape = [1] * img.ndim
        shape[axis] = out_size
        term = term * weights[tap].reshape(shape)
        out = term if out is None else out + term
    return out


def resize(img: np.ndarray, out_h: int, out_w: int, method: str = "bilinear") -> np.ndarray:
    """Resize (h, w[, c]) image; bilinear or bicubic (Catmull-Rom), edge clamped."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be >= 1, got {out_h}x{out_w}")
    if img.shape[0] == out_h and img.shape[1] == out_w:
        return img.copy()
    work = img.astype(np.float64)
    if method == "bilinear":
        work = _resize_axis_bilinear(work, out_h, axis=0)
        work = _resize_axis_bilinear(work, out_w, axis=1)
    elif method == "bicubic":
        work = _resize_axis_bicubic(work, out_h, axis=0)
        work = _resize_axis_bicubic(work, out_w, axis=1)
    else:
        raise ValueError(f"unknown resize method {method!r}")
    return work.astype(img.dtype)


def halve(img: np.ndarray) -> np.ndarray:
    """Exact 2x downscale (box mean == bilinear at factor 2, pixel centers).

    The four-sample sums run in float64, where float32 quads add exactly,
    so the result is independent of traversal order: flips and right-angle
    rotations commute with this operation bit-for-bit.
    """
    h, w = img.shape[0], img.shape[1]
    if h % 2 or w % 2:
        raise ValueError(f"halve needs even dimensions, got {h}x{w}")
    work = img.astype(np.float64)
    quad = work[0::2, 0::2] + work[0::2, 1::2] + work[1::2, 0::2] + work[1::2, 1::2]
    return (quad * 0.25).astype(img.dtype)


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[0], img.shape[1]
    if size > min(h, w):
        raise ValueError(f"crop {size} exceeds image {h}x{w}")
    top = (h - size) // 2
    left = (w - size) // 2
    return img[top:top + size, left:left + size].copy()


def flip_h(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def rotate(img: np.ndarray, degrees: int) -> np.ndarray:
    """Rotate counterclockwise by 0, 90 or 270 degrees."""
    if degrees == 0:
        return img.copy()
    if degrees == 90:
        return np.ascontiguousarray(np.rot90(img, 1))
    if degrees == 270:
        return np.ascontiguousarray(np.rot90(img, 3))
    raise ValueError(f"rotation must be 0, 90 or 270, got {degrees}")


def augment(img: np.ndarray, crop_size: int | None = None, flip: bool = False,
            rotation: int = 0) -> np.ndarray:
    """Center crop, then optional horizontal flip, then rotation."""
    out = center_crop(img, crop_size) if crop_size is not None else img
    if flip:
        out = flip_h(out)
    return rotate(out, rotation)
