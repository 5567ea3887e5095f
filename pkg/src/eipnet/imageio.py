"""PNG (8-bit RGB/RGBA) and binary PPM codecs.

PNG is the on-disk format; PPM (P6, maxval 255) is the bit-exact golden
format for tests. Both decode to (h, w, 3) uint8; RGBA alpha is dropped.
Malformed input raises ImageFormatError naming the byte offset or cause.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    pass


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, width: int, height: int, bpp: int) -> np.ndarray:
    stride = width * bpp
    if len(raw) != height * (stride + 1):
        raise ImageFormatError(
            f"decompressed pixel stream has {len(raw)} bytes, expected {height * (stride + 1)}"
        )
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(height):
        ftype = raw[y * (stride + 1)]
        line = np.frombuffer(raw, dtype=np.uint8,
                             count=stride, offset=y * (stride + 1) + 1).astype(np.int64)
        if ftype == 0:
            cur = line
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):
            cur = np.zeros(stride, dtype=np.int64)
            for x in range(stride):
                left = cur[x - bpp] if x >= bpp else 0
                if ftype == 1:
                    cur[x] = (line[x] + left) & 0xFF
                elif ftype == 3:
                    cur[x] = (line[x] + (left + prev[x]) // 2) & 0xFF
                else:
                    ul = prev[x - bpp] if x >= bpp else 0
                    cur[x] = (line[x] + _paeth(left, int(prev[x]), int(ul))) & 0xFF
        else:
            raise ImageFormatError(f"unknown scanline filter {ftype} at row {y}")
        out[y] = cur.astype(np.uint8)
        prev = cur
    return out


def decode_png(data: bytes) -> np.ndarray:
    if data[:8] != _PNG_SIG:
        raise ImageFormatError("bad PNG signature at offset 0")
    pos = 8
    header = None
    idat = bytearray()
    seen_end = False
    while pos < len(data) and not seen_end:
        if pos + 8 > len(data):
            raise ImageFormatError(f"truncated chunk header at offset {pos}")
        length = struct.unpack(">I", data[pos:pos + 4])[0]
        ctype = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if len(body) != length:
            raise ImageFormatError(f"truncated chunk {ctype!r} at offset {pos}")
        crc = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])[0]
        if zlib.crc32(ctype + body) != crc:
            raise ImageFormatError(f"chunk CRC mismatch at offset {pos}")
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.extend(body)
        elif ctype == b"IEND":
            seen_end = True
        pos += 12 + length
    if header is None:
        raise ImageFormatError("missing IHDR chunk")
    w, h, depth, ctype_code, comp, filt, interlace = header
    if depth != 8:
        raise ImageFormatError(f"unsupported PNG bit depth {depth} (only 8-bit supported)")
    if ctype_code not in (2, 6):
        raise ImageFormatError(f"unsupported PNG color type {ctype_code} (only RGB/RGBA)")
    if comp != 0 or filt != 0:
        raise ImageFormatError("unsupported PNG compression/filter method")
    if interlace != 0:
        raise ImageFormatError("interlaced PNG is unsupported")
    bpp = 3 if ctype_code == 2 else 4
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise ImageFormatError(f"corrupt PNG pixel stream: {exc}") from exc
    rows = _unfilter(raw, w, h, bpp)
    px = rows.reshape(h, w, bpp)
    return np.ascontiguousarray(px[:, :, :3])


def encode_png(img: np.ndarray) -> bytes:
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"encode_png expects (h, w, 3) uint8, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    raw = b"".join(b"\x00" + img[y].tobytes() for y in range(h))

    def chunk(ctype: bytes, body: bytes) -> bytes:
        return struct.pack(">I", len(body)) + ctype + body + struct.pack(
            ">I", zlib.crc32(ctype + body))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (_PNG_SIG + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 6)) + chunk(b"IEND", b""))


def decode_ppm(data: bytes) -> np.ndarray:
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"truncated PPM header at offset {start}")
        return data[start:pos]

    magic = token()
    if magic != b"P6":
        raise ImageFormatError(f"not a binary PPM (magic {magic!r} at offset 0)")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise ImageFormatError(f"bad PPM header near offset {pos}: {exc}") from exc
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval} (only 255)")
    pos += 1  # single whitespace after maxval
    need = w * h * 3
    body = data[pos:pos + need]
    if len(body) != need:
        raise ImageFormatError(f"PPM pixel data truncated at offset {pos + len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def encode_ppm(img: np.ndarray) -> bytes:
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"encode_ppm expects (h, w, 3) uint8, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()


def decode(source) -> np.ndarray:
    """Decode PNG or PPM from bytes or a path."""
    data = Path(source).read_bytes() if not isinstance(source, bytes) else source
    if data[:8] == _PNG_SIG:
        return decode_png(data)
    if data[:2] == b"P6":
        return decode_ppm(data)
    raise ImageFormatError("unrecognized image format (expected PNG or binary PPM)")


def encode(img: np.ndarray, fmt: str = "PNG") -> bytes:
    if fmt.upper() == "PNG":
        return encode_png(img)
    if fmt.upper() == "PPM":
        return encode_ppm(img)
    raise ValueError(f"unknown format {fmt!r}")


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".ppm" else "PNG"
    path.write_bytes(encode(img, fmt))
