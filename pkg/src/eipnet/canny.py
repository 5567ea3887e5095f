"""Canny edge detection with statistics-driven threshold selection.

Pipeline: BT.601 grayscale (0..255 scale) -> 5x5 Gaussian blur
(sigma 1.4, replicate border) -> 3x3 Sobel gradients -> magnitude ->
four-direction non-maximum suppression -> double-threshold hysteresis
with 8-connectivity.

The high threshold can be fixed or derived from the gradient-magnitude
statistics as mean + k * std (population std); the low threshold is
always half the high one in adaptive mode.

Accumulations walk kernel taps in a fixed order so the vectorized code
here is bit-identical to a scalar implementation of the same pipeline.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

GAUSS_SIZE = 5
GAUSS_SIGMA = 1.4


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    # Scalar math.exp and a sequential normalization sum define the exact
    # double-precision coefficients of the pipeline (SIMD exp variants
    # round differently at the last ulp).
    half = size // 2
    g = np.empty((size, size), dtype=np.float64)
    total = 0.0
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            v = math.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
            g[dy + half, dx + half] = v
            total += v
    return g / total

_GAUSS = _gaussian_kernel(GAUSS_SIZE, GAUSS_SIGMA)
_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


@dataclass(frozen=True)
class ThresholdPolicy:
    """fixed(t_low, t_high) on the 8-bit gradient scale, or adaptive(k_high)."""

    mode: str = "adaptive"
    k_high: float = 1.6
    t_low: float = 100.0
    t_high: float = 255.0

    def __post_init__(self):
        if self.mode not in ("adaptive", "fixed"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if self.mode == "fixed" and not 0 <= self.t_low <= self.t_high:
            raise ValueError(f"need 0 <= t_low <= t_high, got ({self.t_low}, {self.t_high})")

    def thresholds(self, magnitude: np.ndarray) -> tuple[float, float]:
        if self.mode == "fixed":
            return float(self.t_low), float(self.t_high)
        return adaptive_thresholds(magnitude, self.k_high)


def adaptive_thresholds(magnitude: np.ndarray, k_high: float = 1.6) -> tuple[float, float]:
    """(t_low, t_high) = (t_high / 2, mean + k_high * population std)."""
    if magnitude.size == 0:
        raise ValueError("empty image")
    m = float(np.mean(magnitude))
    sigma = float(np.std(magnitude))
    t_high = m + k_high * sigma
    return t_high / 2.0, t_high


def grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma on the 0..255 scale, float64."""
    if img.ndim == 2:
        return img.astype(np.float64)
    f = img.astype(np.float64)
    return 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]


def _correlate_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    k = kernel.shape[0]
    half = k // 2
    padded = np.pad(img, half, mode="edge")
    h, w = img.shape
    acc = np.zeros((h, w), dtype=np.float64)
    for dy in range(k):
        for dx in range(k):
            acc += kernel[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return acc


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blur then Sobel; returns (gx, gy, magnitude = sqrt(gx^2 + gy^2))."""
    blurred = _correlate_replicate(grayscale(img), _GAUSS)
    gx = _correlate_replicate(blurred, _SOBEL_X)
    gy = _correlate_replicate(blurred, _SOBEL_Y)
    return gx, gy, np.sqrt(gx * gx + gy * gy)


# (negative neighbor, positive neighbor) offsets per quantized direction;
# survival requires mag > negative neighbor and mag >= positive neighbor,
# so exact ties keep a single-pixel line.
_NMS_NEIGHBORS = {
    0: ((0, -1), (0, 1)),
    1: ((1, -1), (-1, 1)),
    2: ((-1, 0), (1, 0)),
    3: ((-1, -1), (1, 1)),
}


_TAN_22_5 = 0.41421356237309503
_TAN_67_5 = 2.414213562373095


def _sectors(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Quantize gradient direction (mod 180 deg) into 4 sectors.

    Pure comparisons against tan(22.5) and tan(67.5), avoiding atan2 so
    scalar and vectorized code agree bit for bit.
    """
    ax, ay = np.abs(gx), np.abs(gy)
    near_horizontal = ay < _TAN_22_5 * ax
    diagonal = ~near_horizontal & (ay <= _TAN_67_5 * ax)
    same_sign = gx * gy >= 0
    sector = np.full(gx.shape, 2, dtype=np.int8)
    sector[near_horizontal] = 0
    sector[diagonal & same_sign] = 1
    sector[diagonal & ~same_sign] = 3
    return sector


def non_maximum_suppression(gx: np.ndarray, gy: np.ndarray, mag: np.ndarray) -> np.ndarray:
    sector = _sectors(gx, gy)
    keep = np.zeros(mag.shape, dtype=bool)
    h, w = mag.shape
    inner = np.s_[1:h - 1, 1:w - 1]
    for s, ((ny, nx), (py, px)) in _NMS_NEIGHBORS.items():
        neg = mag[1 + ny:h - 1 + ny, 1 + nx:w - 1 + nx]
        pos = mag[1 + py:h - 1 + py, 1 + px:w - 1 + px]
        center = mag[inner]
        keep[inner] |= (sector[inner] == s) & (center > neg) & (center >= pos)
    out = np.zeros_like(mag)
    out[keep] = mag[keep]
    return out


def hysteresis(nms: np.ndarray, t_low: float, t_high: float) -> np.ndarray:
    """Strong pixels seed an 8-connected flood through weak pixels.

    Zero magnitude is never an edge, which keeps constant images empty
    even when adaptive thresholds degenerate to zero.
    """
    strong = (nms >= t_high) & (nms > 0)
    weak = (nms >= t_low) & (nms > 0)
    h, w = nms.shape
    visited = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not visited[ny, nx]:
                    visited[ny, nx] = True
                    queue.append((ny, nx))
    return visited.astype(np.uint8)


def canny(img: np.ndarray, policy: ThresholdPolicy | None = None) -> np.ndarray:
    """Binary {0,1} edge map of an (h, w, 3) uint8 or (h, w) gray image."""
    policy = policy or ThresholdPolicy()
    gx, gy, mag = gradients(img)
    t_low, t_high = policy.thresholds(mag)
    nms = non_maximum_suppression(gx, gy, mag)
    return hysteresis(nms, t_low, t_high)
