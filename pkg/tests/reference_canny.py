"""Scalar reference Canny detector used as the oracle in tests.

Written as straight per-pixel loops against the documented contract:
BT.601 gray (0..255) -> 5x5 Gaussian sigma 1.4 (replicate border) ->
3x3 Sobel -> magnitude -> 4-direction NMS (strict against the negative
neighbor, non-strict against the positive one) -> hysteresis with
8-connectivity. Deliberately naive; do not import the production module.
"""

import math

import numpy as np


def _gaussian_kernel():
    sigma = 1.4
    k = [[0.0] * 5 for _ in range(5)]
    total = 0.0
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            v = math.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
            k[dy + 2][dx + 2] = v
            total += v
    # normalize in the same reduction order numpy's kernel-sum uses is not
    # required: the normalization constant below is a single scalar divide.
    return [[v / total for v in row] for row in k]


_SOBEL_X = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
_SOBEL_Y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]


def _gray(img):
    img = np.asarray(img)
    h, w = img.shape[0], img.shape[1]
    out = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            if img.ndim == 2:
                out[y][x] = float(img[y, x])
            else:
                r, g, b = (float(img[y, x, 0]), float(img[y, x, 1]), float(img[y, x, 2]))
                out[y][x] = 0.299 * r + 0.587 * g + 0.114 * b
    return out


def _correlate(src, kernel):
    h, w = len(src), len(src[0])
    k = len(kernel)
    half = k // 2
    out = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(k):
                for dx in range(k):
                    sy = min(max(y + dy - half, 0), h - 1)
                    sx = min(max(x + dx - half, 0), w - 1)
                    acc += kernel[dy][dx] * src[sy][sx]
            out[y][x] = acc
    return out


_TAN_22_5 = 0.41421356237309503
_TAN_67_5 = 2.414213562373095


def reference_canny(img, t_low=None, t_high=None, k_high=1.6):
    """Binary edge map; thresholds adaptive unless both are given."""
    gray = _gray(img)
    h, w = len(gray), len(gray[0])
    blur = _correlate(gray, _gaussian_kernel())
    gx = _correlate(blur, _SOBEL_X)
    gy = _correlate(blur, _SOBEL_Y)
    mag = [[math.sqrt(gx[y][x] * gx[y][x] + gy[y][x] * gy[y][x]) for x in range(w)]
           for y in range(h)]

    if t_low is None or t_high is None:
        flat = np.array(mag).reshape(-1)
        mean = float(np.mean(flat))
        std = float(np.std(flat))
        t_high = mean + k_high * std
        t_low = t_high / 2.0

    neighbors = {
        0: ((0, -1), (0, 1)),
        1: ((1, -1), (-1, 1)),
        2: ((-1, 0), (1, 0)),
        3: ((-1, -1), (1, 1)),
    }
    nms = [[0.0] * w for _ in range(h)]
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            ax, ay = abs(gx[y][x]), abs(gy[y][x])
            if ay < _TAN_22_5 * ax:
                sector = 0
            elif ay <= _TAN_67_5 * ax:
                sector = 1 if gx[y][x] * gy[y][x] >= 0 else 3
            else:
                sector = 2
            (ny, nx), (py, px) = neighbors[sector]
            m = mag[y][x]
            if m > mag[y + ny][x + nx] and m >= mag[y + py][x + px]:
                nms[y][x] = m

    out = np.zeros((h, w), dtype=np.uint8)
    stack = []
    for y in range(h):
        for x in range(w):
            if nms[y][x] >= t_high and nms[y][x] > 0:
                out[y, x] = 1
                stack.append((y, x))
    while stack:
        y, x = stack.pop()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if (0 <= ny < h and 0 <= nx < w and not out[ny, nx]
                        and nms[ny][nx] >= t_low and nms[ny][nx] > 0):
                    out[ny, nx] = 1
                    stack.append((ny, nx))
    return out
