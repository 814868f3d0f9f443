"""Command-line front door: build trees, sample proposals, simulate clicks,
compute losses, run NoC evaluation, and benchmark the connectivity constraint.

Every randomized subcommand takes an explicit --seed; outputs are
byte-reproducible given identical flags and seeds.  Exit codes: 0 success,
1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import pgm
from .errors import FormatError, ValidationError
from .feature_io import (
    FeatureGrid,
    RegionSpec,
    SceneSpec,
    read_features,
    synth_features,
    two_region_scene,
    write_features,
)
from .interaction_sim import clicks_to_csv, encode_click_map, sample_random_clicks
from .losses import bilateral_affinity, pixel_features_from_rgb, total_loss
from .merge_tree import bottom_up_merge, deserialize_tree, serialize_tree
from .noc_eval import (
    BUILTIN_SEGMENTERS,
    export_eval_result,
    run_noc_eval,
    synthetic_two_region_dataset,
)
from .proposal_sampler import SamplerConfig, sample_proposal, upsample_mask


@dataclass
class BenchReport:
    grid_size: int
    channels: int
    repeats: int
    constrained_seconds: list[float]
    unconstrained_seconds: list[float]

    @property
    def mean_constrained(self) -> float:
        return statistics.mean(self.constrained_seconds)

    @property
    def mean_unconstrained(self) -> float:
        return statistics.mean(self.unconstrained_seconds)

    @property
    def median_constrained(self) -> float:
        return statistics.median(self.constrained_seconds)

    @property
    def median_unconstrained(self) -> float:
        return statistics.median(self.unconstrained_seconds)

    @property
    def speedup(self) -> float:
        return self.median_unconstrained / self.median_constrained


def bench_connectivity(
    grid_size: int, channels: int, repeats: int, seed: int = 0
) -> BenchReport:
    """Time bottom_up_merge with and without connectivity on one random grid."""
    if grid_size * grid_size < 64:
        raise ValueError("grid_size^2 must be at least 64")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    rng = np.random.default_rng(seed)
    grid = FeatureGrid(
        grid_size,
        grid_size,
        channels,
        rng.standard_normal((grid_size, grid_size, channels)).astype(np.float32),
    )
    constrained, unconstrained = [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        bottom_up_merge(grid, use_connectivity=True)
        constrained.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        bottom_up_merge(grid, use_connectivity=False)
        unconstrained.append(time.perf_counter() - t0)
    return BenchReport(grid_size, channels, repeats, constrained, unconstrained)


def format_bench_report(report: BenchReport) -> str:
    lines = [
        f"grid,{report.grid_size}x{report.grid_size}x{report.channels}",
        f"repeats,{report.repeats}",
        f"mean_seconds_constrained,{report.mean_constrained:.4f}",
        f"mean_seconds_unconstrained,{report.mean_unconstrained:.4f}",
        f"median_seconds_constrained,{report.median_constrained:.4f}",
        f"median_seconds_unconstrained,{report.median_unconstrained:.4f}",
        f"speedup_constrained_over_unconstrained,{report.speedup:.2f}",
    ]
    return "\n".join(lines) + "\n"


def _scene_from_json(path: str, stride: int) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    try:
        regions = tuple(
            RegionSpec(
                top=int(r["top"]),
                left=int(r["left"]),
                height=int(r["height"]),
                width=int(r["width"]),
                center=tuple(float(x) for x in r["center"]),
                sigma=float(r.get("sigma", 0.0)),
            )
            for r in doc["regions"]
        )
        return SceneSpec(
            height_patches=int(doc["height_patches"]),
            width_patches=int(doc["width_patches"]),
            channels=int(doc["channels"]),
            regions=regions,
            patch_stride=stride,
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed scene JSON: {exc}") from exc


def _cmd_synth(args) -> int:
    if args.regions:
        scene = _scene_from_json(args.regions, args.stride)
    else:
        scene = two_region_scene(
            args.height,
            args.width,
            args.channels,
            sigma=args.sigma,
            patch_stride=args.stride,
        )
    grid = synth_features(scene, args.seed)
    write_features(grid, args.out)
    print(f"wrote {args.out} ({grid.height_patches}x{grid.width_patches}x{grid.channels})")
    return 0


def _cmd_build_tree(args) -> int:
    grid = read_features(args.features)
    tree = bottom_up_merge(grid, use_connectivity=not args.no_connectivity)
    serialize_tree(tree, args.out, include_centroids=not args.skip_centroids)
    print(f"wrote {args.out} (n_leaves={tree.n_leaves}, connectivity={tree.connectivity_used})")
    return 0


def _cmd_sample(args) -> int:
    tree = deserialize_tree(args.tree)
    cfg = SamplerConfig(
        alpha=args.alpha,
        min_area_fraction=args.min_area,
        max_retries=args.max_retries,
        seed=args.seed,
    )
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        proposal = sample_proposal(tree, cfg, rng)
        path = os.path.join(args.out, f"proposal_{i:03d}.pgm")
        pgm.write_pgm(path, proposal.patch_mask)
        if args.pixel_stride:
            pixel_path = os.path.join(args.out, f"proposal_{i:03d}_px.pgm")
            pgm.write_pgm(pixel_path, upsample_mask(proposal.patch_mask, args.pixel_stride))
        print(
            f"{path} node={proposal.node_id} depth={proposal.depth} "
            f"area={proposal.area_fraction:.4f}"
        )
    return 0


def _cmd_clicks(args) -> int:
    target = pgm.read_pgm(args.mask)
    rng = np.random.default_rng(args.seed)
    clicks = sample_random_clicks(
        target, max_pos=args.max_pos, max_neg=args.max_neg, margin=args.margin, rng=rng
    )
    with open(args.out, "w", encoding="ascii") as f:
        f.write(clicks_to_csv(clicks))
    print(f"wrote {args.out} ({len(clicks)} clicks)")
    if args.map_prefix:
        cmap = encode_click_map(clicks, target.shape[0], target.shape[1], args.radius)
        pgm.write_pgm(f"{args.map_prefix}_pos.pgm", cmap.positive)
        pgm.write_pgm(f"{args.map_prefix}_neg.pgm", cmap.negative)
        print(f"wrote {args.map_prefix}_pos.pgm and {args.map_prefix}_neg.pgm")
    return 0


def _cmd_loss(args) -> int:
    target = pgm.read_pgm(args.target)
    pred_grid = read_features(args.pred)
    if pred_grid.channels != 1:
        raise ValidationError("prediction MISF must have channels=1")
    q = pred_grid.data[:, :, 0].astype(np.float64)
    if q.shape != target.shape:
        raise ValidationError(f"prediction {q.shape} does not match target {target.shape}")
    image = pgm.read_ppm(args.image)
    if image.shape[:2] != target.shape:
        raise ValidationError(f"image {image.shape[:2]} does not match target {target.shape}")
    sigmas = tuple(float(s) for s in args.sigmas.split(","))
    if len(sigmas) != 3:
        raise ValidationError("--sigmas needs three comma-separated values")
    affinity = bilateral_affinity(pixel_features_from_rgb(image), sigmas)
    from .losses import bce_loss, smoothness_loss

    bce_value, _ = bce_loss(target, q)
    smooth_value, _ = smoothness_loss(q, affinity)
    total_value, _ = total_loss(target, q, affinity, args.lam)
    print("bce,smooth,total")
    print(f"{bce_value!r},{smooth_value!r},{total_value!r}")
    return 0


def _cmd_eval(args) -> int:
    segmenter = BUILTIN_SEGMENTERS.get(args.segmenter)
    if segmenter is None:
        raise ValidationError(
            f"unknown segmenter {args.segmenter!r}; choose from {sorted(BUILTIN_SEGMENTERS)}"
        )
    dataset = synthetic_two_region_dataset(
        args.scenes,
        height_patches=args.height,
        width_patches=args.width,
        channels=args.channels,
        patch_stride=args.stride,
        sigma=args.sigma,
        seed=args.seed,
    )
    result = run_noc_eval(
        dataset,
        segmenter,
        targets=args.target_iou,
        max_clicks=args.max_clicks,
        disk_radius=args.radius,
    )
    paths = export_eval_result(result, args.out)
    with open(paths["summary"], "r", encoding="ascii") as f:
        sys.stdout.write(f.read())
    return 0


def _cmd_bench(args) -> int:
    report = bench_connectivity(args.size, args.channels, args.repeats, args.seed)
    text = format_bench_report(report)
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="ascii") as f:
            f.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mis",
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="generate a synthetic feature grid", formatter_class=fmt)
    p.add_argument("--height", type=int, default=16, help="patch rows")
    p.add_argument("--width", type=int, default=16, help="patch columns")
    p.add_argument("--channels", type=int, default=4, help="feature channels")
    p.add_argument("--sigma", type=float, default=0.1, help="per-region noise sigma")
    p.add_argument("--stride", type=int, default=4, help="patch stride metadata (pixels)")
    p.add_argument("--regions", default=None, help="scene descriptor JSON (overrides the two-halves preset)")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--out", required=True, help="output MISF path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-tree", help="merge a feature grid into a tree", formatter_class=fmt)
    p.add_argument("--features", required=True, help="input MISF path")
    p.add_argument("--out", required=True, help="output tree path")
    p.add_argument("--no-connectivity", action="store_true", help="merge without the adjacency constraint")
    p.add_argument("--skip-centroids", action="store_true", help="omit centroids from the tree file")
    p.set_defaults(func=_cmd_build_tree)

    p = sub.add_parser("sample", help="sample proposals from a tree", formatter_class=fmt)
    p.add_argument("--tree", required=True, help="input tree path")
    p.add_argument("--out", required=True, help="output directory for PGM masks")
    p.add_argument("--count", type=int, default=1, help="number of proposals")
    p.add_argument("--alpha", type=float, default=0.9, help="descent decay coefficient")
    p.add_argument("--min-area", type=float, default=0.05, help="minimum area fraction")
    p.add_argument("--max-retries", type=int, default=100, help="resamples before root fallback")
    p.add_argument("--pixel-stride", type=int, default=0, help="also write pixel-resolution masks upsampled by this stride")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("clicks", help="simulate random clicks on a mask", formatter_class=fmt)
    p.add_argument("--mask", required=True, help="target mask PGM")
    p.add_argument("--out", required=True, help="output clicks CSV")
    p.add_argument("--max-pos", type=int, default=10, help="maximum positive clicks")
    p.add_argument("--max-neg", type=int, default=10, help="maximum negative clicks")
    p.add_argument("--margin", type=int, default=5, help="erosion margin / band base (pixels)")
    p.add_argument("--radius", type=int, default=5, help="click-map disk radius")
    p.add_argument("--map-prefix", default=None, help="also write <prefix>_pos.pgm / <prefix>_neg.pgm")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.set_defaults(func=_cmd_clicks)

    p = sub.add_parser("loss", help="compute bce/smoothness/total losses", formatter_class=fmt)
    p.add_argument("--target", required=True, help="target mask PGM")
    p.add_argument("--pred", required=True, help="prediction MISF (channels=1, pixel resolution)")
    p.add_argument("--image", required=True, help="RGB image PPM for the bilateral affinity")
    p.add_argument("--sigmas", default="8,8,4", help="spatial,luma,chroma sigmas")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0, help="smoothness weight")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("eval", help="run the NoC evaluation loop on synthetic scenes", formatter_class=fmt)
    p.add_argument("--segmenter", required=True, help="builtin:oracle, builtin:empty, or builtin:tree")
    p.add_argument("--scenes", type=int, default=20, help="number of synthetic scenes")
    p.add_argument("--height", type=int, default=16, help="patch rows per scene")
    p.add_argument("--width", type=int, default=16, help="patch columns per scene")
    p.add_argument("--channels", type=int, default=4, help="feature channels")
    p.add_argument("--stride", type=int, default=4, help="patch stride (pixels)")
    p.add_argument("--sigma", type=float, default=0.1, help="scene noise sigma")
    p.add_argument("--max-clicks", type=int, default=20, help="click budget per sample")
    p.add_argument(
        "--target-iou",
        type=float,
        action="append",
        default=None,
        help="target IoU (repeatable; defaults to 0.85 and 0.90)",
    )
    p.add_argument("--radius", type=int, default=5, help="click-map disk radius")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--out", required=True, help="output directory for CSVs and summary")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time constrained vs unconstrained merging", formatter_class=fmt)
    p.add_argument("--size", type=int, default=48, help="square grid side (patches)")
    p.add_argument("--channels", type=int, default=32, help="feature channels")
    p.add_argument("--repeats", type=int, default=5, help="timing repeats")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--out", default=None, help="optional report CSV path")
    p.set_defaults(func=_cmd_bench)

    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help (0) and usage errors (2)
        return int(exc.code or 0)
    if args.__dict__.get("command") == "eval" and args.target_iou is None:
        args.target_iou = [0.85, 0.90]
    try:
        return int(args.func(args) or 0)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
