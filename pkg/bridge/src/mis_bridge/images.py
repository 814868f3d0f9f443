"""Image decoding and the patch-divisible resize rule.

PPM (P6) and PGM (P5) decode natively; anything else goes through Pillow
when it is installed.  Resizing is bilinear with half-pixel centers (the
torch/PIL `align_corners=False` convention).
"""

from __future__ import annotations

import numpy as np


class ImageDecodeError(ValueError):
    """The file is not a decodable image."""


def _read_netpbm(raw: bytes) -> np.ndarray:
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageDecodeError("not a binary PGM/PPM")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token:
            raise ImageDecodeError("truncated netpbm header")
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise ImageDecodeError(f"bad netpbm token {token!r}") from exc
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise ImageDecodeError("bad netpbm header values")
    bands = 3 if magic == b"P6" else 1
    expected = width * height * bands
    payload = raw[pos : pos + expected]
    if len(payload) < expected:
        raise ImageDecodeError("netpbm payload truncated")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, bands)
    if bands == 1:
        pixels = np.repeat(pixels, 3, axis=2)
    return pixels.copy()


def load_rgb(path) -> np.ndarray:
    """Decode a file to (H, W, 3) uint8; raises ImageDecodeError on failure."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] in (b"P5", b"P6"):
        return _read_netpbm(raw)
    try:
        from PIL import Image
    except ImportError as exc:
        raise ImageDecodeError(f"{path}: unsupported format and Pillow not installed") from exc
    import io

    try:
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc


def divisible_size(extent: int, patch: int) -> int:
    """Next size divisible by the patch: extent + patch - extent % patch."""
    if extent % patch == 0:
        return extent
    return extent + patch - extent % patch


def _resample_axis(img: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    old_len = img.shape[axis]
    if new_len == old_len:
        return img
    scale = old_len / new_len
    centers = (np.arange(new_len) + 0.5) * scale - 0.5
    centers = np.clip(centers, 0.0, old_len - 1.0)  # replicate edges
    lo = np.floor(centers).astype(np.int64)
    frac = centers - lo
    hi = np.clip(lo + 1, 0, old_len - 1)
    moved = np.moveaxis(img, axis, 0)
    out = moved[lo] * (1.0 - frac)[(...,) + (None,) * (moved.ndim - 1)] + moved[hi] * frac[
        (...,) + (None,) * (moved.ndim - 1)
    ]
    return np.moveaxis(out, 0, axis)


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) image to (height, width, C) float64."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError("image must be (H, W, C)")
    out = _resample_axis(img, height, axis=0)
    out = _resample_axis(out, width, axis=1)
    return out


def resize_to_patch_multiple(image: np.ndarray, patch: int) -> np.ndarray:
    """Apply the divisible-resize rule to both axes."""
    h, w = image.shape[:2]
    return resize_bilinear(image, divisible_size(h, patch), divisible_size(w, patch))
