"""Minimal binary PGM/PPM (P5/P6) reader and writer, maxval up to 255.

PGM is the harness's required raster format: trivially implementable in any
language, byte-exact, no dependencies. PNG support lives in dataset loading
as an optional extension.
"""

from __future__ import annotations

import os

import numpy as np


class PnmError(ValueError):
    """File is not a PNM raster this reader supports."""


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PnmError("unexpected end of header")
    return data[start:pos], pos


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    """Read a P5 (returns (H, W)) or P6 (returns (H, W, 3)) uint8 raster."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported magic {magic!r} (want P5 or P6)")
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        if not token.isdigit():
            raise PnmError(f"non-numeric header token {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if not 0 < maxval <= 255:
        raise PnmError(f"unsupported maxval {maxval} (want 1..255)")
    pos += 1  # exactly one whitespace byte separates header and raster
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise PnmError(f"raster holds {len(raster)} bytes, expected {expected}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return arr.reshape(shape).copy()


def write_pnm(path: str | os.PathLike, values: np.ndarray, maxval: int = 255) -> None:
    """Write a uint8 array as P5 ((H, W)) or P6 ((H, W, 3))."""
    arr = np.ascontiguousarray(values)
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise PnmError("values outside uint8 range")
        arr = arr.astype(np.uint8)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise PnmError(f"cannot encode array of shape {arr.shape}")
    if not 0 < maxval <= 255:
        raise PnmError(f"unsupported maxval {maxval}")
    h, w = arr.shape[0], arr.shape[1]
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    with open(path, "wb") as fh:
        fh.write(header + arr.tobytes())
