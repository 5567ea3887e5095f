"""Versioned binary checkpoints.

Layout (little-endian): magic "EIPN", version u32, iteration u64,
config blob (u32 length + UTF-8), tensor count u32, then per tensor:
name (u32 length + UTF-8), ndim u32, dims u32 each, float32 payload.
Entries round-trip bit-identically and keep insertion order, so
save -> load -> save reproduces files byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EIPN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, params: dict[str, np.ndarray], iteration: int = 0, config_text: str = "") -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", iteration)]
    blob = config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(blob)))
    chunks.append(blob)
    chunks.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (name -> float32 tensor, {"iteration": int, "config_text": str})."""
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"truncated checkpoint while reading {what} at offset {pos}")
        out = data[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    iteration = struct.unpack("<Q", take(8, "iteration"))[0]
    cfg_len = struct.unpack("<I", take(4, "config length"))[0]
    config_text = take(cfg_len, "config").decode("utf-8")
    count = struct.unpack("<I", take(4, "tensor count"))[0]
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = struct.unpack("<I", take(4, "name length"))[0]
        name = take(name_len, "name").decode("utf-8")
        if name in params:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        ndim = struct.unpack("<I", take(4, "rank"))[0]
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "shape"))
        size = int(np.prod(shape)) if ndim else 1
        payload = take(4 * size, f"tensor {name!r}")
        params[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after checkpoint payload")
    return params, {"iteration": iteration, "config_text": config_text}
