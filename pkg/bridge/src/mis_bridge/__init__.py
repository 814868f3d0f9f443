"""Export dense ViT patch features into MISF files for the merge engine."""

from .backbones import BackboneLoadError, MockBackbone, load_backbone
from .export import ExportSpec, export_features, list_images
from .images import (
    ImageDecodeError,
    divisible_size,
    load_rgb,
    resize_bilinear,
    resize_to_patch_multiple,
)
from .misf import read_misf, write_misf

__version__ = "0.1.0"
