"""One-way export pipeline: images in, MISF feature files out.

Undecodable images are logged and skipped; a backbone that cannot be built
is fatal.  Exports are deterministic (eval mode, no augmentation), so a
re-export of the same image is byte-identical.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

from .backbones import load_backbone
from .images import ImageDecodeError, load_rgb, resize_to_patch_multiple
from .misf import write_misf

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".ppm", ".pgm", ".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class ExportSpec:
    images: tuple[str, ...]
    out_dir: str
    backbone: str = "dino_vits8"
    device: str = "cpu"


def list_images(directory: str) -> tuple[str, ...]:
    names = sorted(
        name
        for name in os.listdir(directory)
        if name.lower().endswith(IMAGE_EXTENSIONS)
    )
    return tuple(os.path.join(directory, name) for name in names)


def export_features(spec: ExportSpec) -> list[str]:
    """Run the backbone over every image; returns the written MISF paths."""
    backbone = load_backbone(spec.backbone, device=spec.device)
    os.makedirs(spec.out_dir, exist_ok=True)
    written: list[str] = []
    for image_path in spec.images:
        try:
            rgb = load_rgb(image_path)
        except (ImageDecodeError, OSError) as exc:
            logger.error("skipping %s: %s", image_path, exc)
            continue
        resized = resize_to_patch_multiple(rgb, backbone.patch_size)
        features = backbone.extract(resized)
        stem = os.path.splitext(os.path.basename(image_path))[0]
        out_path = os.path.join(spec.out_dir, f"{stem}.misf")
        write_misf(out_path, features, patch_stride=backbone.patch_size)
        written.append(out_path)
    return written
