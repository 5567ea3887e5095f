"""Counter-based pseudo-random numbers (Philox 4x32, 10 rounds).

Every random draw in the project (weight init, shuffling, augmentation)
comes from a Philox stream addressed by (seed, lane words, block index).
Counter-based generation means a draw is a pure function of its address,
so any consumer can be replayed independently and out of order.
"""

from __future__ import annotations

import zlib

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)


def philox4x32(counter: np.ndarray, key: np.ndarray, rounds: int = 10) -> np.ndarray:
    """Run the Philox 4x32 block cipher on an (n, 4) uint32 counter array.

    `key` is a (2,) or (n, 2) uint32 array. Returns (n, 4) uint32.
    """
    ctr = counter.astype(np.uint64)
    x0, x1, x2, x3 = ctr[:, 0], ctr[:, 1], ctr[:, 2], ctr[:, 3]
    key = np.asarray(key, dtype=np.uint64)
    if key.ndim == 1:
        k0 = np.full_like(x0, key[0])
        k1 = np.full_like(x0, key[1])
    else:
        k0, k1 = key[:, 0].copy(), key[:, 1].copy()
    for _ in range(rounds):
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    out = np.stack([x0, x1, x2, x3], axis=1)
    return out.astype(np.uint32)


def _lane(value) -> int:
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf-8"))
    return int(value) & 0xFFFFFFFF


class PhiloxStream:
    """A lazily-indexed stream of random numbers.

    The 64-bit seed forms the cipher key; up to three lane words (ints or
    strings, hashed with crc32) identify the sub-stream; the block index
    occupies the remaining counter lane. Two streams with different lane
    words never overlap.
    """

    def __init__(self, seed: int, *lanes) -> None:
        if len(lanes) > 3:
            raise ValueError("at most 3 lane words")
        seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint32)
        words = [_lane(v) for v in lanes] + [0] * (3 - len(lanes))
        self._lanes = np.array(words, dtype=np.uint32)
        self._block = 0

    def u32(self, n: int) -> np.ndarray:
        """Next `n` uint32 values."""
        nblocks = (n + 3) // 4
        idx = np.arange(self._block, self._block + nblocks, dtype=np.uint32)
        self._block += nblocks
        ctr = np.empty((nblocks, 4), dtype=np.uint32)
        ctr[:, 0] = idx
        ctr[:, 1:] = self._lanes
        return philox4x32(ctr, self._key).reshape(-1)[:n]

    def uniforms(self, n: int) -> np.ndarray:
        """`n` float64 values in [0, 1)."""
        return self.u32(n).astype(np.float64) * 2.0**-32

    def normals(self, n: int) -> np.ndarray:
        """`n` standard normal float64 values via Box-Muller."""
        m = (n + 1) // 2
        u = self.u32(2 * m).astype(np.float64).reshape(2, m)
        u1 = (u[0] + 1.0) * 2.0**-32  # (0, 1]: keeps log finite
        u2 = u[1] * 2.0**-32
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (sort by random keys)."""
        keys = self.u32(2 * n).astype(np.uint64)
        keys = (keys[:n] << np.uint64(32)) | keys[n:]
        return np.argsort(keys, kind="stable")

    def choice(self, probabilities) -> int:
        """Draw one index according to `probabilities` (must sum to 1)."""
        p = np.asarray(probabilities, dtype=np.float64)
        u = self.uniforms(1)[0]
        return int(np.searchsorted(np.cumsum(p), u, side="right").clip(0, len(p) - 1))
