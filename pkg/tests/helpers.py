"""Independent oracles shared by the test modules.

These deliberately re-derive results from first principles (raw features,
flood fills, all-pairs distances, finite differences) instead of reusing the
library's internals, so they can catch systematic errors in the main paths.
"""

from __future__ import annotations

import numpy as np

from mis import FeatureGrid


def sse_of(features: np.ndarray) -> float:
    """Within-cluster sum of squared errors of a (k, c) feature block."""
    mu = features.mean(axis=0)
    return float(((features - mu) ** 2).sum())


def leaf_sets(tree) -> list[set[int]]:
    """Leaf membership of every node, built by replaying the merge rows."""
    sets = [{i} for i in range(tree.n_leaves)]
    for a, b in tree.rows:
        sets.append(sets[int(a)] | sets[int(b)])
    return sets


def merge_cost_from_raw_features(grid: FeatureGrid, tree, k: int) -> float:
    """SSE(children union) - SSE(child a) - SSE(child b) from raw features."""
    feats = grid.data.reshape(grid.n_patches, grid.channels).astype(np.float64)
    sets = leaf_sets(tree)
    a, b = (int(x) for x in tree.rows[k])
    fa = feats[sorted(sets[a])]
    fb = feats[sorted(sets[b])]
    fu = feats[sorted(sets[a] | sets[b])]
    return sse_of(fu) - sse_of(fa) - sse_of(fb)


def flood_fill_is_connected(mask: np.ndarray) -> bool:
    """4-connectivity of the set pixels via an explicit flood fill."""
    mask = np.asarray(mask, dtype=bool)
    coords = np.argwhere(mask)
    if len(coords) == 0:
        return False
    h, w = mask.shape
    seen = np.zeros_like(mask)
    start = tuple(coords[0])
    stack = [start]
    seen[start] = True
    count = 1
    while stack:
        r, c = stack.pop()
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                count += 1
                stack.append((rr, cc))
    return count == len(coords)


def brute_next_click(gt: np.ndarray, pred: np.ndarray) -> tuple[int, int, bool]:
    """All-pairs reference for the error-center click.

    Components come from a hand-rolled BFS; the deep center maximizes the
    integer squared distance to the nearest non-component pixel, where the
    virtual ring just outside the image counts as non-component.
    """
    gt = np.asarray(gt, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    h, w = gt.shape
    false_neg = gt & ~pred
    false_pos = pred & ~gt

    def components(err):
        seen = np.zeros_like(err)
        comps = []
        for r in range(h):
            for c in range(w):
                if err[r, c] and not seen[r, c]:
                    seen[r, c] = True
                    stack = [(r, c)]
                    comp = []
                    while stack:
                        y, x = stack.pop()
                        comp.append((y, x))
                        for yy, xx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                            if 0 <= yy < h and 0 <= xx < w and err[yy, xx] and not seen[yy, xx]:
                                seen[yy, xx] = True
                                stack.append((yy, xx))
                    comps.append(sorted(comp))
        return comps

    candidates = []
    for err, is_fn in ((false_neg, True), (false_pos, False)):
        for comp in components(err):
            first_flat = comp[0][0] * w + comp[0][1]
            candidates.append(((-len(comp), 0 if is_fn else 1, first_flat), comp, is_fn))
    assert candidates, "masks are identical"
    candidates.sort(key=lambda item: item[0])
    _, comp, is_fn = candidates[0]

    comp_mask = np.zeros((h, w), dtype=bool)
    for r, c in comp:
        comp_mask[r, c] = True
    outside = np.argwhere(~comp_mask)
    best = None
    for r, c in comp:
        border = min(r + 1, h - r, c + 1, w - c) ** 2
        if len(outside):
            d2 = ((outside[:, 0] - r) ** 2 + (outside[:, 1] - c) ** 2).min()
            d2 = min(int(d2), border)
        else:
            d2 = border
        key = (-d2, r, c)
        if best is None or key < best:
            best = key
    _, r, c = best
    return r, c, is_fn


def finite_diff_grad(func, q: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of the whole field."""
    grad = np.zeros_like(q, dtype=np.float64)
    it = np.nditer(q, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        plus = q.copy()
        minus = q.copy()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (func(plus) - func(minus)) / (2.0 * h)
        it.iternext()
    return grad


def random_grid(rng: np.random.Generator, max_side: int = 6, max_channels: int = 4,
                tie_mode: str = "none") -> FeatureGrid:
    """Random small feature grid; tie modes force equal-cost merge candidates."""
    while True:
        h = int(rng.integers(1, max_side + 1))
        w = int(rng.integers(1, max_side + 1))
        if h * w >= 2:
            break
    c = int(rng.integers(1, max_channels + 1))
    if tie_mode == "all":
        data = np.full((h, w, c), float(rng.integers(0, 5)), dtype=np.float32)
    elif tie_mode == "pairs":
        half = rng.standard_normal(((h * w + 1) // 2, c))
        data = np.repeat(half, 2, axis=0)[: h * w].reshape(h, w, c).astype(np.float32)
    else:
        data = rng.standard_normal((h, w, c)).astype(np.float32)
    return FeatureGrid(h, w, c, data)
