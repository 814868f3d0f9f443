"""Minimal binary PGM (P5) / PPM (P6) readers and writers.

Masks are written as P5 with maxval 255: 0 = background, 255 = foreground.
Readers treat values above 127 as foreground.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, TruncatedFileError


def _read_header(data: bytes, magic: bytes) -> tuple[int, int, int, int]:
    """Parse `magic W H maxval` and return (width, height, maxval, offset)."""
    if not data.startswith(magic):
        raise FormatError(f"expected {magic!r} file")
    fields: list[int] = []
    pos = len(magic)
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":  # comment line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise TruncatedFileError("header ends early")
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise FormatError(f"bad header token {token!r}") from exc
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError("bad header dimensions")
    return width, height, maxval, pos


def write_pgm(path, mask: np.ndarray) -> None:
    """Write a 2-D boolean mask as binary PGM (0/255)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    h, w = mask.shape
    payload = (mask.astype(np.uint8) * 255).tobytes()
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(payload)


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into a 2-D boolean mask (value > 127 is foreground)."""
    with open(path, "rb") as f:
        data = f.read()
    width, height, maxval, offset = _read_header(data, b"P5")
    if maxval > 255:
        raise FormatError("16-bit PGM not supported")
    expected = width * height
    payload = data[offset : offset + expected]
    if len(payload) < expected:
        raise TruncatedFileError("pixel payload shorter than header promises")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return pixels > 127


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 image as binary PPM."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    rgb = rgb.astype(np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into an (H, W, 3) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    width, height, maxval, offset = _read_header(data, b"P6")
    if maxval > 255:
        raise FormatError("16-bit PPM not supported")
    expected = width * height * 3
    payload = data[offset : offset + expected]
    if len(payload) < expected:
        raise TruncatedFileError("pixel payload shorter than header promises")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()
