"""Interactive-segmentation evaluation loop (NoC@target, IoU-per-click curves).

A segmenter is any callable `(context, clicks, click_map, prev_mask) -> mask`
that is deterministic in its inputs.  The loop clicks the center of the
largest error region, asks the segmenter for a new mask, records IoU, and
repeats until every target IoU has been reached once or the click budget is
spent.  Samples that never reach a target count at the click cap.

A classical merge-tree segmenter is included so the whole loop runs without
any learned model: each positive click selects the largest tree node that
contains the click's patch and no negative click's patch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .feature_io import FeatureGrid, synth_features, two_region_scene
from .interaction_sim import Click, encode_click_map, iou, next_click_center
from .merge_tree import MergeTree, bottom_up_merge, parents_of
from .proposal_sampler import rasterize_node, upsample_mask

DEFAULT_TARGETS = (0.85, 0.90)
DEFAULT_MAX_CLICKS = 20


@dataclass
class EvalResult:
    targets: tuple[float, ...]
    max_clicks: int
    clicks_to_target: dict[float, list[int]]  # per-sample first-reach counts
    iou_sequences: list[list[float]]  # per-sample IoU after each click
    noc_at: dict[float, float]  # mean clicks per target (failures at cap)
    curve: list[float]  # mean IoU per click index 1..max_clicks
    failures: dict[float, int]  # samples that never reached the target


def tree_segmenter(tree: MergeTree, clicks, patch_stride: int) -> np.ndarray:
    """Largest-consistent-node prediction from a merge tree.

    For each positive click: walk up from the click's leaf patch and keep the
    highest ancestor whose subtree contains no negative click's patch.  When
    positive and negative clicks share a patch, the positive leaf itself wins.
    The union of selected nodes is rasterized to pixel resolution.
    """
    positives = [c for c in clicks if c.positive]
    if not positives:
        raise ValueError("tree segmenter needs at least one positive click")
    if patch_stride < 1:
        raise ValueError("patch_stride must be positive")
    h, w = tree.grid_dims
    parents = parents_of(tree)

    def leaf_of(click: Click) -> int:
        pr, pc = click.row // patch_stride, click.col // patch_stride
        if not (0 <= pr < h and 0 <= pc < w):
            raise ValueError(f"click ({click.row}, {click.col}) outside the patch grid")
        return pr * w + pc

    blocked = np.zeros(tree.n_nodes, dtype=bool)
    for click in clicks:
        if click.positive:
            continue
        node = leaf_of(click)
        while node != -1 and not blocked[node]:
            blocked[node] = True
            node = int(parents[node])

    patch_mask = np.zeros((h, w), dtype=bool)
    for click in positives:
        leaf = leaf_of(click)
        if blocked[leaf]:
            chosen = leaf  # conflicting clicks in one patch: positive leaf wins
        else:
            chosen = leaf
            parent = int(parents[chosen])
            while parent != -1 and not blocked[parent]:
                chosen = parent
                parent = int(parents[chosen])
        patch_mask |= rasterize_node(tree, chosen)
    return upsample_mask(patch_mask, patch_stride)


def oracle_segmenter(context, clicks, click_map, prev) -> np.ndarray:
    """Returns the ground truth after any click (upper bound, NoC = 1)."""
    return context["gt"].copy()


def empty_segmenter(context, clicks, click_map, prev) -> np.ndarray:
    """Always predicts background (lower bound, NoC = max_clicks)."""
    return np.zeros_like(context["gt"], dtype=bool)


def hierarchy_segmenter(context, clicks, click_map, prev) -> np.ndarray:
    """Adapter running tree_segmenter from a dataset context."""
    return tree_segmenter(context["tree"], clicks, context["patch_stride"])


BUILTIN_SEGMENTERS = {
    "builtin:oracle": oracle_segmenter,
    "builtin:empty": empty_segmenter,
    "builtin:tree": hierarchy_segmenter,
}


def run_noc_eval(
    dataset,
    segmenter,
    targets=DEFAULT_TARGETS,
    max_clicks: int = DEFAULT_MAX_CLICKS,
    disk_radius: int = 5,
) -> EvalResult:
    """Evaluate a segmenter over (context, gt_mask) samples.

    Per sample: the first click is the error center against an empty
    prediction, then predict/click alternate.  IoU is recorded after every
    prediction; the count for a target is the first click index reaching it,
    or max_clicks on failure.  Click coordinates never repeat within a sample.
    """
    targets = tuple(float(t) for t in targets)
    if max_clicks < 1:
        raise ValueError("max_clicks must be >= 1")
    if not targets or any(not 0.0 < t <= 1.0 for t in targets):
        raise ValueError("targets must lie in (0, 1]")

    clicks_to_target: dict[float, list[int]] = {t: [] for t in targets}
    iou_sequences: list[list[float]] = []
    for context, gt in dataset:
        gt = np.asarray(gt, dtype=bool)
        prediction = np.zeros_like(gt)
        clicks: list[Click] = []
        ious: list[float] = []
        first_reach: dict[float, int | None] = {t: None for t in targets}
        for click_index in range(1, max_clicks + 1):
            click = next_click_center(
                gt, prediction, exclude=[(c.row, c.col) for c in clicks]
            )
            clicks.append(replace(click, order=len(clicks)))
            click_map = encode_click_map(clicks, gt.shape[0], gt.shape[1], disk_radius)
            prediction = segmenter(context, clicks, click_map, prediction)
            prediction = np.asarray(prediction)
            if prediction.shape != gt.shape:
                raise ValueError(
                    f"segmenter returned shape {prediction.shape}, expected {gt.shape}"
                )
            prediction = prediction.astype(bool)
            value = iou(gt, prediction)
            ious.append(value)
            for t in targets:
                if first_reach[t] is None and value >= t:
                    first_reach[t] = click_index
            if all(first_reach[t] is not None for t in targets):
                break
        for t in targets:
            clicks_to_target[t].append(
                first_reach[t] if first_reach[t] is not None else max_clicks
            )
        iou_sequences.append(ious)

    n_samples = len(iou_sequences)
    noc_at = {
        t: (sum(counts) / n_samples if n_samples else float("nan"))
        for t, counts in clicks_to_target.items()
    }
    failures = {
        t: sum(
            1
            for count, seq in zip(clicks_to_target[t], iou_sequences)
            if count == max_clicks and max(seq, default=0.0) < t
        )
        for t in targets
    }
    curve = []
    for idx in range(1, max_clicks + 1):
        if n_samples == 0:
            curve.append(float("nan"))
            continue
        # samples that stopped early keep their final IoU
        curve.append(
            sum(seq[min(idx, len(seq)) - 1] for seq in iou_sequences) / n_samples
        )
    return EvalResult(
        targets=targets,
        max_clicks=max_clicks,
        clicks_to_target=clicks_to_target,
        iou_sequences=iou_sequences,
        noc_at=noc_at,
        curve=curve,
        failures=failures,
    )


def synthetic_two_region_dataset(
    n_scenes: int,
    height_patches: int = 16,
    width_patches: int = 16,
    channels: int = 4,
    patch_stride: int = 4,
    sigma: float = 0.1,
    seed: int = 0,
    use_connectivity: bool = True,
) -> list[tuple[dict, np.ndarray]]:
    """Seeded two-region scenes with merge trees, for model-free evaluation.

    Each scene splits the patch grid into two rectangles at a random axis and
    position; the ground truth is one of the two regions at pixel resolution.
    """
    if n_scenes < 1:
        raise ValueError("need at least one scene")
    master = np.random.default_rng(seed)
    dataset = []
    for _ in range(n_scenes):
        axis = int(master.integers(0, 2))
        extent = height_patches if axis == 0 else width_patches
        lo = max(1, extent // 3)
        hi = max(lo + 1, 2 * extent // 3 + 1)
        split = int(master.integers(lo, hi))
        scene = two_region_scene(
            height_patches,
            width_patches,
            channels,
            sigma=sigma,
            split_axis=axis,
            split_at=split,
            patch_stride=patch_stride,
        )
        grid = synth_features(scene, int(master.integers(0, 2**63 - 1)))
        tree = bottom_up_merge(grid, use_connectivity)
        region = scene.regions[int(master.integers(0, 2))]
        patch_gt = np.zeros((height_patches, width_patches), dtype=bool)
        patch_gt[
            region.top : region.top + region.height,
            region.left : region.left + region.width,
        ] = True
        gt = upsample_mask(patch_gt, patch_stride)
        context = {"tree": tree, "patch_stride": patch_stride, "gt": gt, "grid": grid}
        dataset.append((context, gt))
    return dataset


def per_click_csv(result: EvalResult) -> str:
    lines = ["sample_id,click_index,iou"]
    for sample_id, seq in enumerate(result.iou_sequences):
        for idx, value in enumerate(seq, start=1):
            lines.append(f"{sample_id},{idx},{value!r}")
    return "\n".join(lines) + "\n"


def curve_csv(result: EvalResult) -> str:
    lines = ["click_index,mean_iou"]
    for idx, value in enumerate(result.curve, start=1):
        lines.append(f"{idx},{value!r}")
    return "\n".join(lines) + "\n"


def summary_text(result: EvalResult) -> str:
    lines = [
        f"samples,{len(result.iou_sequences)}",
        f"max_clicks,{result.max_clicks}",
    ]
    for t in sorted(result.targets):
        lines.append(f"noc@{t!r},{result.noc_at[t]!r}")
        lines.append(f"failures@{t!r},{result.failures[t]}")
    return "\n".join(lines) + "\n"


def export_eval_result(result: EvalResult, out_dir) -> dict[str, str]:
    """Write per-click CSV, curve CSV, and summary; byte-deterministic."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "per_click": os.path.join(out_dir, "per_click.csv"),
        "curve": os.path.join(out_dir, "curve.csv"),
        "summary": os.path.join(out_dir, "summary.txt"),
    }
    with open(paths["per_click"], "w", encoding="ascii") as f:
        f.write(per_click_csv(result))
    with open(paths["curve"], "w", encoding="ascii") as f:
        f.write(curve_csv(result))
    with open(paths["summary"], "w", encoding="ascii") as f:
        f.write(summary_text(result))
    return paths
