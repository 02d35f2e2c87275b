"""8-bit grayscale PGM reading (P2 and P5) and writing (P5)."""

from __future__ import annotations

import os

import numpy as np


class PgmError(ValueError):
    pass


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PgmError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        out.append(data[start:pos])
    return out, pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode PGM bytes into a ``(height, width)`` uint8 array."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"not a grayscale PGM (magic {magic!r})")
    try:
        (w, h, maxval), pos = _tokens(data, 3, 2)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PgmError(f"bad PGM header: {exc}") from None
    if width < 1 or height < 1:
        raise PgmError("PGM dimensions must be positive")
    if not 0 < maxval < 256:
        raise PgmError(f"only 8-bit PGM is supported (maxval {maxval})")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        raw = data[pos : pos + width * height]
        if len(raw) != width * height:
            raise PgmError("truncated PGM raster")
        pix = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    else:
        vals, _ = _tokens(data, width * height, pos)
        pix = np.array([int(v) for v in vals], dtype=np.int64).reshape(height, width)
        if pix.min() < 0 or pix.max() > maxval:
            raise PgmError("PGM sample out of range")
    if maxval != 255:
        pix = np.round(pix.astype(float) * 255.0 / maxval)
    return pix.astype(np.uint8)


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def to_bytes(x: np.ndarray) -> np.ndarray:
    """Map [0, 1] reals to 8-bit intensities."""
    return np.clip(np.round(np.asarray(x, dtype=float) * 255.0), 0, 255).astype(np.uint8)


def read_pgm(path) -> np.ndarray:
    """Read a PGM file and return intensities ``k / 255`` as floats."""
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_pgm(data).astype(float) / 255.0


def write_pgm(path, x: np.ndarray) -> None:
    data = encode_pgm(to_bytes(x))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
