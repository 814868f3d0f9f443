"""Top-down proposal sampling from a merge tree.

A random walk starts at the root with continue-probability 1.0; each step it
either stops or descends to a uniformly chosen child, multiplying the
continue-probability by a decay coefficient.  Small proposals are filtered
by a minimum area fraction with resampling, falling back to the root.

Randomness comes from a caller-owned numpy Generator; two uniform draws per
descent step (continue?, which child?) make runs replayable from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .merge_tree import MergeTree, leaf_mask_of_node


@dataclass(frozen=True)
class SamplerConfig:
    alpha: float = 0.9
    min_area_fraction: float = 0.05
    max_retries: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if not 0.0 <= self.min_area_fraction < 1.0:
            raise ValueError("min_area_fraction must be in [0, 1)")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")


@dataclass(frozen=True)
class Proposal:
    node_id: int
    patch_mask: np.ndarray  # bool (height_patches, width_patches)
    area_fraction: float
    depth: int


def _descend(tree: MergeTree, alpha: float, rng: np.random.Generator) -> tuple[int, int]:
    node = tree.root
    n = tree.n_leaves
    p = 1.0
    depth = 0
    while rng.random() < p and node >= n:
        children = tree.rows[node - n]
        node = int(children[0]) if rng.random() < 0.5 else int(children[1])
        p = alpha * p
        depth += 1
    return node, depth


def top_down_sample(tree: MergeTree, alpha: float, rng: np.random.Generator) -> int:
    """Sample one tree node by the decaying top-down walk; returns its id."""
    if tree.n_leaves < 2:
        raise ValueError("tree must have at least 2 leaves")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return _descend(tree, alpha, rng)[0]


def rasterize_node(tree: MergeTree, node_id: int) -> np.ndarray:
    """Binary patch mask of the leaves under node_id (row-major leaf layout)."""
    flags = leaf_mask_of_node(tree, node_id)
    h, w = tree.grid_dims
    return flags.reshape(h, w)


def sample_proposal(
    tree: MergeTree, cfg: SamplerConfig, rng: np.random.Generator
) -> Proposal:
    """Sample until the area filter passes; after max_retries return the root."""
    n = tree.n_leaves
    node, depth = tree.root, 0
    for _ in range(cfg.max_retries):
        node, depth = _descend(tree, cfg.alpha, rng)
        if tree.sizes[node] / n >= cfg.min_area_fraction:
            break
    else:
        node, depth = tree.root, 0
    mask = rasterize_node(tree, node)
    return Proposal(
        node_id=node,
        patch_mask=mask,
        area_fraction=int(mask.sum()) / n,
        depth=depth,
    )


def upsample_mask(mask: np.ndarray, patch_stride: int) -> np.ndarray:
    """Nearest-neighbor upsample of a patch mask to pixel resolution."""
    if patch_stride < 1:
        raise ValueError("patch_stride must be positive")
    return np.repeat(np.repeat(mask, patch_stride, axis=0), patch_stride, axis=1)
