"""Patch-feature grids and the MISF container format.

A feature grid is the only input contract between a feature extractor and
the merge engine: a dense (height_patches, width_patches, channels) block of
finite 32-bit floats plus the patch stride in pixels as metadata.

MISF layout (little-endian, no padding, no checksum):

    magic "MISF" | u32 version=1 | u32 height_patches | u32 width_patches
    | u32 channels | u32 patch_stride | height*width*channels IEEE-754 f32,
    row-major, channel-last
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DescriptorError, FormatError, TruncatedFileError, ValidationError

MAGIC = b"MISF"
VERSION = 1
_HEADER = struct.Struct("<4s5I")


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """Immutable grid of per-patch feature vectors."""

    height_patches: int
    width_patches: int
    channels: int
    data: np.ndarray  # (H, W, C) float32
    patch_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "data", np.ascontiguousarray(self.data, dtype=np.float32))
        self.validate()

    def validate(self) -> None:
        if self.height_patches < 1 or self.width_patches < 1 or self.channels < 1:
            raise ValidationError("grid dimensions must be positive")
        if self.patch_stride < 1:
            raise ValidationError("patch_stride must be positive")
        expected = (self.height_patches, self.width_patches, self.channels)
        if self.data.shape != expected:
            raise ValidationError(f"data shape {self.data.shape} != {expected}")
        if not np.isfinite(self.data).all():
            raise ValidationError("feature values must be finite")

    @property
    def n_patches(self) -> int:
        return self.height_patches * self.width_patches

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureGrid):
            return NotImplemented
        return (
            self.height_patches == other.height_patches
            and self.width_patches == other.width_patches
            and self.channels == other.channels
            and self.patch_stride == other.patch_stride
            and np.array_equal(self.data, other.data)
        )


def write_features(grid: FeatureGrid, path) -> None:
    """Write a grid as MISF. Byte-deterministic for equal inputs."""
    grid.validate()
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        grid.height_patches,
        grid.width_patches,
        grid.channels,
        grid.patch_stride,
    )
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_features(path) -> FeatureGrid:
    """Read a MISF file; bit-exact inverse of write_features."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError("file shorter than the MISF header")
    magic, version, h, w, c, stride = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if min(h, w, c, stride) < 1:
        raise FormatError("header dimensions must be positive")
    expected = h * w * c * 4
    payload = raw[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedFileError(
            f"payload has {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise FormatError("trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    if not np.isfinite(data).all():
        raise ValidationError("payload contains non-finite values")
    return FeatureGrid(h, w, c, data, stride)


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned rectangle of patches sharing one feature center."""

    top: int
    left: int
    height: int
    width: int
    center: tuple[float, ...]
    sigma: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic-scene descriptor: rectangles must tile the grid exactly."""

    height_patches: int
    width_patches: int
    channels: int
    regions: tuple[RegionSpec, ...]
    patch_stride: int = 1

    def validate(self) -> None:
        if not self.regions:
            raise DescriptorError("at least one region required")
        cover = np.zeros((self.height_patches, self.width_patches), dtype=np.int32)
        for reg in self.regions:
            if reg.sigma < 0:
                raise DescriptorError("sigma must be non-negative")
            if len(reg.center) != self.channels:
                raise DescriptorError("center dimension != channels")
            if reg.height < 1 or reg.width < 1:
                raise DescriptorError("region must be non-empty")
            if (
                reg.top < 0
                or reg.left < 0
                or reg.top + reg.height > self.height_patches
                or reg.left + reg.width > self.width_patches
            ):
                raise DescriptorError("region outside the grid")
            cover[reg.top : reg.top + reg.height, reg.left : reg.left + reg.width] += 1
        if (cover > 1).any():
            raise DescriptorError("regions overlap")
        if (cover == 0).any():
            raise DescriptorError("regions do not cover the grid")


def synth_features(spec: SceneSpec, seed: int) -> FeatureGrid:
    """Generate a grid where each patch is its region's center plus Gaussian noise.

    Deterministic under (spec, seed); regions are filled in declaration order.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    data = np.zeros(
        (spec.height_patches, spec.width_patches, spec.channels), dtype=np.float64
    )
    for reg in spec.regions:
        block = np.broadcast_to(
            np.asarray(reg.center, dtype=np.float64), (reg.height, reg.width, spec.channels)
        ).copy()
        if reg.sigma > 0:
            block += rng.normal(0.0, reg.sigma, size=block.shape)
        data[reg.top : reg.top + reg.height, reg.left : reg.left + reg.width] = block
    return FeatureGrid(
        spec.height_patches,
        spec.width_patches,
        spec.channels,
        data.astype(np.float32),
        spec.patch_stride,
    )


def two_region_scene(
    height_patches: int,
    width_patches: int,
    channels: int,
    sigma: float = 0.1,
    split_axis: int = 1,
    split_at: int | None = None,
    low: float = 0.0,
    high: float = 10.0,
    patch_stride: int = 1,
) -> SceneSpec:
    """Two-rectangle scene split along rows (axis 0) or columns (axis 1)."""
    if split_axis not in (0, 1):
        raise DescriptorError("split_axis must be 0 or 1")
    extent = height_patches if split_axis == 0 else width_patches
    if split_at is None:
        split_at = extent // 2
    if not 0 < split_at < extent:
        raise DescriptorError("split_at outside the grid")
    center_a = tuple([low] * channels)
    center_b = tuple([high] * channels)
    if split_axis == 0:
        regions = (
            RegionSpec(0, 0, split_at, width_patches, center_a, sigma),
            RegionSpec(split_at, 0, height_patches - split_at, width_patches, center_b, sigma),
        )
    else:
        regions = (
            RegionSpec(0, 0, height_patches, split_at, center_a, sigma),
            RegionSpec(0, split_at, height_patches, width_patches - split_at, center_b, sigma),
        )
    return SceneSpec(height_patches, width_patches, channels, regions, patch_stride)
