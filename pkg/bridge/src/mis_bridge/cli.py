"""mis-export: batch-export patch features from images to MISF files."""

from __future__ import annotations

import argparse
import logging
import sys

from .backbones import BackboneLoadError
from .export import ExportSpec, export_features, list_images


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mis-export",
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--images", required=True, help="directory of input images")
    parser.add_argument("--out", required=True, help="output directory for MISF files")
    parser.add_argument("--backbone", default="dino_vits8", help="feature backbone")
    parser.add_argument(
        "--mock", action="store_true", help="use the deterministic mock backbone"
    )
    parser.add_argument("--device", default="cpu", help="device hint for the ViT")
    return parser


def run_cli(argv) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec = ExportSpec(
        images=list_images(args.images),
        out_dir=args.out,
        backbone="mock" if args.mock else args.backbone,
        device=args.device,
    )
    try:
        written = export_features(spec)
    except (BackboneLoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
