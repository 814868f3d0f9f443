"""MISF container writer (and a reader for self-checks).

The bridge talks to the merge engine exclusively through files in this
format, so the layout is duplicated here on purpose:

    magic "MISF" | u32 version=1 | u32 height_patches | u32 width_patches
    | u32 channels | u32 patch_stride | f32 payload, row-major, channel-last

All integers and floats are little-endian.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"MISF"
VERSION = 1
_HEADER = struct.Struct("<4s5I")


def write_misf(path, features: np.ndarray, patch_stride: int) -> None:
    """Atomically write an (H, W, C) float32 block; temp file then rename."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 3:
        raise ValueError("features must be (H, W, C)")
    if not np.isfinite(features).all():
        raise ValueError("features must be finite")
    h, w, c = features.shape
    header = _HEADER.pack(MAGIC, VERSION, h, w, c, patch_stride)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(features.tobytes())
    os.replace(tmp, path)


def read_misf(path) -> tuple[np.ndarray, int]:
    """Read back an exported file; returns (features, patch_stride)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ValueError("file shorter than the MISF header")
    magic, version, h, w, c, stride = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a MISF v1 file")
    expected = h * w * c * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise ValueError("payload length does not match the header")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy(), stride
