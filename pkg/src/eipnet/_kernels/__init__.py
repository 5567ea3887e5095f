"""Kernel backend selection.

Two interchangeable implementations of the hot kernels exist:

* ``_core``  - compiled Cython loops (fixed reduction order, OpenMP),
* ``pyref``  - pure numpy (im2col + BLAS, integral-image pooling).

The backend is chosen once at import. ``EIPNET_KERNELS`` overrides the
choice: ``auto`` (default), ``compiled`` (fail if missing), ``python``.
Under the compiled backend, convolutions over large channel counts are
still delegated to BLAS, where cache blocking beats direct loops; the
crossover constants come from ``benchmarks/bench_kernels.py``.

Transposed convolution (the only configuration used is kernel 4,
stride 2, pad 1) is expressed through the three conv kernels: its
forward is the conv input-gradient, its input-gradient is the conv
forward, and its weight-gradient is the conv weight-gradient with the
roles of input and output swapped.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

from . import pyref
from .pyref import conv_out_size, pool_pad_split

_choice = os.environ.get("EIPNET_KERNELS", "auto")
_core = None
if _choice in ("auto", "compiled"):
    try:
        _core = importlib.import_module("._core", __package__)
    except ImportError:
        if _choice == "compiled":
            raise
elif _choice != "python":
    raise ValueError(f"EIPNET_KERNELS must be auto|compiled|python, got {_choice!r}")

BACKEND = "compiled" if _core is not None else "python"

if _core is not None and not os.environ.get("OMP_NUM_THREADS"):
    # Kernel calls here are mostly sub-millisecond; OpenMP fork/join and
    # contention with BLAS threads cost more than they save on small hosts.
    # benchmarks/bench_kernels.py explores scaling; override via
    # OMP_NUM_THREADS or the CLI --threads flag.
    _core.set_num_threads(int(os.environ.get("EIPNET_THREADS", "1")))

# Measured crossovers vs BLAS on small-core hosts; direct loops win when
# the implied matmul is too skinny for cache blocking to pay off.
_CONV_DIRECT_LIMIT = 2400      # ci * co * k * k
_POOL_DIRECT_LIMIT = 1 << 25   # c * h * w * k * k


def _use_direct_conv(ci: int, co: int, k: int) -> bool:
    return _core is not None and ci * co * k * k <= _CONV_DIRECT_LIMIT


def set_num_threads(n: int) -> None:
    if _core is not None:
        _core.set_num_threads(n)


def conv2d_forward(x, w, b, stride, pad):
    co, ci, k, _ = w.shape
    if _use_direct_conv(ci, co, k):
        n, _, h, win = x.shape
        out = np.empty(
            (n, co, conv_out_size(h, k, stride, pad), conv_out_size(win, k, stride, pad)),
            dtype=x.dtype,
        )
        bias = b if b is not None else np.zeros(co, dtype=x.dtype)
        _core.conv2d_forward(x, w, bias, stride, pad, out)
        return out
    return pyref.conv2d_forward(x, w, b, stride, pad)


def conv2d_input_grad(gy, w, stride, pad, in_h, in_w):
    co, ci, k, _ = w.shape
    if _use_direct_conv(ci, co, k):
        gx = np.empty((gy.shape[0], ci, in_h, in_w), dtype=gy.dtype)
        _core.conv2d_input_grad(gy, w, stride, pad, gx)
        return gx
    return pyref.conv2d_input_grad(gy, w, stride, pad, in_h, in_w)


def conv2d_weight_grad(gy, x, k, stride, pad):
    co = gy.shape[1]
    ci = x.shape[1]
    if _use_direct_conv(ci, co, k):
        gw = np.empty((co, ci, k, k), dtype=gy.dtype)
        scratch = np.empty((co, gy.shape[3]), dtype=gy.dtype)
        _core.conv2d_weight_grad(gy, x, stride, pad, gw, scratch)
        return gw
    return pyref.conv2d_weight_grad(gy, x, k, stride, pad)


def tconv2d_forward(x, w, b):
    """Transposed conv, kernel 4 / stride 2 / pad 1; w is (ci, co, 4, 4)."""
    n, ci, h, win = x.shape
    y = conv2d_input_grad(x, w, 2, 1, 2 * h, 2 * win)
    if b is not None:
        y += b.reshape(1, -1, 1, 1)
    return y


def tconv2d_input_grad(gy, w):
    return conv2d_forward(gy, w, None, 2, 1)


def tconv2d_weight_grad(gy, x):
    return conv2d_weight_grad(x, gy, 4, 2, 1)


def avg_pool_same_forward(x, k):
    if _core is not None and x.shape[1] * x.shape[2] * x.shape[3] * k * k <= _POOL_DIRECT_LIMIT:
        before, after = pool_pad_split(k)
        xpad = np.pad(x, ((0, 0), (0, 0), (before, after), (before, after)), mode="edge")
        out = np.empty_like(x)
        _core.avg_pool_same_forward(xpad, x, k, out)
        return out
    return pyref.avg_pool_same_forward(x, k)


def avg_pool_same_backward(gy, k):
    if _core is not None and gy.shape[1] * gy.shape[2] * gy.shape[3] * k * k <= _POOL_DIRECT_LIMIT:
        n, c, h, w = gy.shape
        gpad = np.zeros((n, c, h + k - 1, w + k - 1), dtype=gy.dtype)
        _core.avg_pool_same_backward(gy, k, gpad)
        return pyref.fold_padded_grad(gpad, k, h, w).astype(gy.dtype, copy=False)
    return pyref.avg_pool_same_backward(gy, k)
