"""Tape-based reverse-mode autodiff over dense tensors.

Only the primitives the super-resolution networks need are provided; no
broadcasting beyond per-channel biases, no views. A forward op runs
eagerly on numpy arrays; when a Tape is active and an input requires
gradients, the op records a node holding its inputs, output, a backward
closure, and a replayable forward closure. Tensors are immutable once
produced by an op; parallel kernels never change per-element reduction
order, so forward passes are bit-reproducible.

float32 is the training element type; float64 exists for gradient
checking.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .prng import PhiloxStream

_ALLOWED_DTYPES = (np.float32, np.float64)
_CHECK_FINITE = False


def set_finite_checks(enabled: bool) -> None:
    """Toggle per-op output finiteness checks (off in hot training loops)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        if data.dtype not in _ALLOWED_DTYPES:
            raise TypeError(f"tensor dtype must be float32/float64, got {data.dtype}")
        self.data = data
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in _ALLOWED_DTYPES:
        arr = arr.astype(np.float32)
    return Tensor(np.ascontiguousarray(arr), requires_grad=requires_grad)


class Node:
    __slots__ = ("op", "inputs", "output", "backward_fn", "forward_fn")

    def __init__(self, op, inputs, output, backward_fn, forward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.forward_fn = forward_fn


class Tape:
    """Ordered record of ops; construction order is topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        popped = _ACTIVE.pop()
        assert popped is self

    def backward(self, loss: Tensor, leaves: Sequence[Tensor] = ()) -> None:
        backward(self, loss, leaves)

    def replay_matches(self) -> bool:
        """Re-run every node's forward; True iff all outputs reproduce bit-identically."""
        for node in self.nodes:
            if not np.array_equal(node.forward_fn(), node.output.data):
                return False
        return True


_ACTIVE: list[Tape] = []


def _finite(op: str, arr: np.ndarray) -> None:
    if _CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by {op}")


def _out(op: str, data: np.ndarray, inputs: tuple, backward_fn: Callable, forward_fn: Callable) -> Tensor:
    _finite(op, data)
    t = Tensor(data)
    if _ACTIVE and any(i.requires_grad for i in inputs):
        t.requires_grad = True
        node = Node(op, inputs, t, backward_fn, forward_fn)
        t.node = node
        _ACTIVE[-1].nodes.append(node)
    return t


def backward(tape: Tape, loss: Tensor, leaves: Sequence[Tensor] = ()) -> None:
    """Accumulate gradients of `loss` into the `.grad` of requires_grad leaves."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            if t.node is None:
                t.grad = gi if t.grad is None else t.grad + gi
            else:
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi
    for leaf in leaves:
        if leaf.requires_grad and leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)


# ---------------------------------------------------------------------------
# convolution / pooling


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor], stride: int = 1, pad: int = 1) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    k = w.data.shape[2]
    h, win = x.data.shape[2], x.data.shape[3]
    bd = b.data if b is not None else None
    y = K.conv2d_forward(x.data, w.data, bd, stride, pad)
    inputs = (x, w) if b is None else (x, w, b)

    def bw(g):
        gx = K.conv2d_input_grad(g, w.data, stride, pad, h, win) if x.requires_grad else None
        gw = K.conv2d_weight_grad(g, x.data, k, stride, pad) if w.requires_grad else None
        if b is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return gx, gw, gb

    return _out("conv2d", y, inputs, bw, lambda: K.conv2d_forward(x.data, w.data, bd, stride, pad))


def transposed_conv2d(x: Tensor, w: Tensor, b: Optional[Tensor]) -> Tensor:
    """Upsampling transposed conv; only kernel 4 / stride 2 / pad 1 exists."""
    if w.data.ndim != 4 or w.data.shape[2:] != (4, 4):
        raise ValueError(f"transposed_conv2d supports only 4x4 kernels, got weight {w.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise ValueError(
            f"transposed_conv2d channel mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )
    bd = b.data if b is not None else None
    y = K.tconv2d_forward(x.data, w.data, bd)
    inputs = (x, w) if b is None else (x, w, b)

    def bw(g):
        gx = K.tconv2d_input_grad(g, w.data) if x.requires_grad else None
        gw = K.tconv2d_weight_grad(g, x.data) if w.requires_grad else None
        if b is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
        return gx, gw, gb

    return _out("tconv2d", y, inputs, bw, lambda: K.tconv2d_forward(x.data, w.data, bd))


def avg_pool_same(x: Tensor, k: int) -> Tensor:
    """Stride-1 average pooling with replicate padding; output size == input size."""
    if k < 1:
        raise ValueError(f"pool kernel must be >= 1, got {k}")
    y = K.avg_pool_same_forward(x.data, k)

    def bw(g):
        return (K.avg_pool_same_backward(g, k),)

    return _out("avg_pool_same", y, (x,), bw, lambda: K.avg_pool_same_forward(x.data, k))


def avg_pool_2x2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2 (even spatial sizes only)."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool_2x2 needs even spatial size, got {x.data.shape}")

    def fwd():
        return x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * x.data.dtype.type(0.25),)

    return _out("avg_pool_2x2", fwd(), (x,), bw, fwd)


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    def bw(g):
        return (g * (x.data > 0),)

    return _out("relu", np.maximum(x.data, 0), (x,), bw, lambda: np.maximum(x.data, 0))


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    a = x.data.dtype.type(alpha)

    def fwd():
        return np.where(x.data > 0, x.data, a * x.data)

    def bw(g):
        return (np.where(x.data > 0, g, a * g),)

    return _out("leaky_relu", fwd(), (x,), bw, fwd)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))
    y = y.astype(x.data.dtype)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _out("sigmoid", y, (x,), bw, lambda: (1.0 / (1.0 + np.exp(-x.data))).astype(x.data.dtype))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""

    def fwd():
        z = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    y = fwd()

    def bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _out("softmax", y, (x,), bw, fwd)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu_0.2":
        return leaky_relu(x, 0.2)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "softmax_lastdim":
        return softmax(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def clamp01(x: Tensor) -> Tensor:
    """Clamp to [0, 1]; gradient passes through the closed interval."""

    def bw(g):
        return (g * ((x.data >= 0) & (x.data <= 1)),)

    return _out("clamp01", np.clip(x.data, 0.0, 1.0), (x,), bw, lambda: np.clip(x.data, 0.0, 1.0))


# ---------------------------------------------------------------------------
# structure ops


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(f"concat_channels spatial mismatch: {a.data.shape} vs {b.data.shape}")
    ca = a.data.shape[1]

    def bw(g):
        return np.ascontiguousarray(g[:, :ca]), np.ascontiguousarray(g[:, ca:])

    return _out(
        "concat_channels",
        np.concatenate([a.data, b.data], axis=1),
        (a, b),
        bw,
        lambda: np.concatenate([a.data, b.data], axis=1),
    )


def flatten(x: Tensor) -> Tensor:
    n = x.data.shape[0]
    shape = x.data.shape

    def bw(g):
        return (g.reshape(shape),)

    return _out("flatten", x.data.reshape(n, -1), (x,), bw, lambda: x.data.reshape(n, -1))


def fully_connected(x: Tensor, w: Tensor, b: Optional[Tensor]) -> Tensor:
    """Affine map on (n, d_in) rows; weight is (d_out, d_in)."""
    if x.data.ndim != 2:
        raise ValueError(f"fully_connected expects (n, d) input, got {x.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"fully_connected dimension mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )

    def fwd():
        y = x.data @ w.data.T
        if b is not None:
            y = y + b.data
        return y

    inputs = (x, w) if b is None else (x, w, b)

    def bw(g):
        gx = g @ w.data if x.requires_grad else None
        gw = g.T @ x.data if w.requires_grad else None
        if b is None:
            return gx, gw
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return _out("fully_connected", fwd(), inputs, bw, fwd)


def color_transform(x: Tensor, matrix: np.ndarray) -> Tensor:
    """Per-pixel 3x3 linear map over the channel axis of (n, 3, h, w)."""
    m = matrix.astype(x.data.dtype)

    def fwd():
        return np.einsum("ij,njhw->nihw", m, x.data, optimize=True)

    def bw(g):
        return (np.einsum("ji,njhw->nihw", m, g, optimize=True),)

    return _out("color_transform", fwd(), (x,), bw, fwd)


# ---------------------------------------------------------------------------
# arithmetic / reductions


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bw(g):
        return g, g

    return _out("add", a.data + b.data, (a, b), bw, lambda: a.data + b.data)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bw(g):
        return g, -g

    return _out("sub", a.data - b.data, (a, b), bw, lambda: a.data - b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")

    def bw(g):
        return g * b.data, g * a.data

    return _out("mul", a.data * b.data, (a, b), bw, lambda: a.data * b.data)


def scale(x: Tensor, s: float) -> Tensor:
    c = x.data.dtype.type(s)

    def bw(g):
        return (g * c,)

    return _out("scale", x.data * c, (x,), bw, lambda: x.data * c)


def log(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Natural log of max(x, eps); gradient is zero below the clamp."""
    e = x.data.dtype.type(eps)

    def fwd():
        return np.log(np.maximum(x.data, e))

    def bw(g):
        return (np.where(x.data > e, g / np.maximum(x.data, e), 0.0).astype(x.data.dtype),)

    return _out("log", fwd(), (x,), bw, fwd)


def tsum(x: Tensor) -> Tensor:
    def bw(g):
        return (np.full_like(x.data, g),)

    return _out("sum", np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype), (x,), bw,
                lambda: np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype))


def tmean(x: Tensor) -> Tensor:
    inv = 1.0 / x.data.size

    def bw(g):
        return ((np.broadcast_to(g, x.data.shape) * inv).astype(x.data.dtype),)

    return _out("mean", np.asarray(x.data.mean(dtype=np.float64), dtype=x.data.dtype), (x,), bw,
                lambda: np.asarray(x.data.mean(dtype=np.float64), dtype=x.data.dtype))


def mean_squared_error(a: Tensor, b: Tensor) -> Tensor:
    return tmean(mul(sub(a, b), sub(a, b)))


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(fn: Callable[..., Tensor], inputs: Sequence, eps: float = 1e-5, seed: int = 0) -> float:
    """Compare analytic and central-difference gradients of `fn`.

    Inputs are promoted to float64 leaves. A fixed random cotangent turns
    non-scalar outputs into a scalar probe. Returns the max over all input
    elements of |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
    """
    leaves = []
    for v in inputs:
        arr = v.data if isinstance(v, Tensor) else np.asarray(v)
        leaves.append(tensor(arr.astype(np.float64), requires_grad=True))

    probe = fn(*leaves)
    cot = None
    if probe.data.size != 1:
        cot = PhiloxStream(seed, "gradcheck").normals(probe.data.size).reshape(probe.data.shape)

    def scalar_loss() -> float:
        out = fn(*leaves)
        if cot is None:
            return float(out.data.sum())
        return float((out.data * cot).sum())

    with Tape() as tape:
        out = fn(*leaves)
        if cot is None:
            loss = out if out.data.size == 1 else tsum(out)
        else:
            loss = tsum(mul(out, tensor(cot)))
    tape.backward(loss, leaves=leaves)

    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad
        flat = leaf.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = scalar_loss()
            flat[i] = orig - eps
            fm = scalar_loss()
            flat[i] = orig
            numeric = (fp - fm) / (2 * eps)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst
