"""Pure-numpy kernel implementations.

Convolutions go through im2col plus one BLAS matmul; pooling uses
float64 integral images. This is the fallback backend when the compiled
extension is unavailable, and the preferred path for large channel
counts where BLAS blocking wins.

Average pooling is exact on constant inputs by construction: the
float32 path accumulates in float64 (where the sums of a constant field
are exact), and the float64 path sums centered deviations, which are
exactly zero for constants.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, _, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    return np.ascontiguousarray(cols), ho, wo


def conv2d_forward(x, w, b, stride, pad):
    n = x.shape[0]
    co, _, k, _ = w.shape
    cols, ho, wo = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(co, -1).T
    if b is not None:
        y += b
    return np.ascontiguousarray(y.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))


def conv2d_input_grad(gy, w, stride, pad, in_h, in_w):
    n, co, ho, wo = gy.shape
    _, ci, k, _ = w.shape
    g = gy.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
    cols = (g @ w.reshape(co, -1)).reshape(n, ho, wo, ci, k, k)
    gxp = np.zeros((n, ci, in_h + 2 * pad, in_w + 2 * pad), dtype=gy.dtype)
    for kh in range(k):
        for kw in range(k):
            gxp[:, :, kh:kh + stride * ho:stride, kw:kw + stride * wo:stride] += (
                cols[:, :, :, :, kh, kw].transpose(0, 3, 1, 2)
            )
    return np.ascontiguousarray(gxp[:, :, pad:pad + in_h, pad:pad + in_w])


def conv2d_weight_grad(gy, x, k, stride, pad):
    n, co, ho, wo = gy.shape
    ci = x.shape[1]
    cols, _, _ = _im2col(x, k, stride, pad)
    g = gy.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
    gw = g.T @ cols
    return np.ascontiguousarray(gw.reshape(co, ci, k, k))


def _sliding_sum_full(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    """Length-k sliding sums of `a` zero-padded with k-1 on both ends."""
    size = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = size + 2 * (k - 1) + 1
    c = np.zeros(shape, dtype=np.float64)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(k, k + size)
    c[tuple(sl)] = a
    np.cumsum(c, axis=axis, out=c)
    hi = [slice(None)] * a.ndim
    lo = [slice(None)] * a.ndim
    hi[axis] = slice(k, None)
    lo[axis] = slice(None, -k)
    return c[tuple(hi)] - c[tuple(lo)]


def _sliding_sum_valid(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    size = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = size + 1
    c = np.zeros(shape, dtype=np.float64)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(1, None)
    np.cumsum(a, axis=axis, out=c[tuple(sl)])
    hi = [slice(None)] * a.ndim
    lo = [slice(None)] * a.ndim
    hi[axis] = slice(k, None)
    lo[axis] = slice(None, size - k + 1)
    return c[tuple(hi)] - c[tuple(lo)]


def pool_pad_split(k: int) -> tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


def avg_pool_same_forward(x, k):
    if k == 1:
        return x.copy()
    n, c, h, w = x.shape
    bh, ah = pool_pad_split(k)
    if x.dtype == np.float64:
        xp = np.pad(x, ((0, 0), (0, 0), (bh, ah), (bh, ah)), mode="edge")
        acc = np.zeros_like(x)
        for dh in range(k):
            for dw in range(k):
                acc += xp[:, :, dh:dh + h, dw:dw + w] - x
        return x + acc / (k * k)
    xp = np.pad(x, ((0, 0), (0, 0), (bh, ah), (bh, ah)), mode="edge").astype(np.float64)
    s = _sliding_sum_valid(_sliding_sum_valid(xp, k, 2), k, 3)
    return (s / (k * k)).astype(x.dtype)


def fold_padded_grad(gp: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    """Collapse a replicate-padding gradient buffer back onto the image edges."""
    bh, _ = pool_pad_split(k)
    rows = gp[:, :, bh:bh + h, :].copy()
    rows[:, :, 0, :] += gp[:, :, :bh, :].sum(axis=2)
    rows[:, :, h - 1, :] += gp[:, :, bh + h:, :].sum(axis=2)
    out = rows[:, :, :, bh:bh + w].copy()
    out[:, :, :, 0] += rows[:, :, :, :bh].sum(axis=3)
    out[:, :, :, w - 1] += rows[:, :, :, bh + w:].sum(axis=3)
    return out


def avg_pool_same_backward(gy, k):
    if k == 1:
        return gy.copy()
    n, c, h, w = gy.shape
    g = gy.astype(np.float64) / (k * k)
    gp = _sliding_sum_full(_sliding_sum_full(g, k, 2), k, 3)
    return fold_padded_grad(gp, k, h, w).astype(gy.dtype)
