"""Connectivity-constrained Ward merging of a feature grid into a merge tree.

Starting from one cluster per patch, the pair of live clusters with the
lowest Ward cost is merged until a single cluster remains.  The result is
recorded as the compact merge matrix: row k holds the two children of
internal node n + k, where leaves are patches 0..n-1 in row-major order and
the root is node 2n - 2.

Determinism contract (shared by `bottom_up_merge` and `brute_force_merge`):

* candidate pairs are compared by (cost, min_id, max_id), so cost ties are
  broken toward the lexicographically smallest id pair;
* all cost/centroid arithmetic runs in float64 through one shared kernel,
  making the two implementations agree bit-for-bit;
* within a recorded row the larger cluster comes first (ties: smaller id).

In constrained mode only 4-adjacent clusters may merge; two clusters are
adjacent when any pair of their patches is adjacent on the grid lattice.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .feature_io import FeatureGrid

TREE_FORMAT = "mis-tree"
TREE_VERSION = 1


@dataclass(frozen=True, eq=False)
class MergeTree:
    """Merge matrix plus per-node bookkeeping for n_leaves patches."""

    n_leaves: int
    rows: np.ndarray  # (n-1, 2) int64, children of node n+k
    sizes: np.ndarray  # (2n-1,) int64 patch counts
    costs: np.ndarray  # (n-1,) float64 Ward cost of merge k
    grid_dims: tuple[int, int]
    connectivity_used: bool
    centroids: np.ndarray | None = None  # (2n-1, c) float64, optional

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_leaves - 1

    @property
    def root(self) -> int:
        return 2 * self.n_leaves - 2

    def __eq__(self, other) -> bool:
        if not isinstance(other, MergeTree):
            return NotImplemented
        if (
            self.n_leaves != other.n_leaves
            or self.grid_dims != other.grid_dims
            or self.connectivity_used != other.connectivity_used
            or not np.array_equal(self.rows, other.rows)
            or not np.array_equal(self.sizes, other.sizes)
            or not np.array_equal(self.costs, other.costs)
        ):
            return False
        if (self.centroids is None) != (other.centroids is None):
            return False
        return self.centroids is None or np.array_equal(self.centroids, other.centroids)


@dataclass
class RegionAdjacency:
    """Undirected adjacency between live clusters (edges as (min, max) pairs)."""

    edges: set[tuple[int, int]]
    live: set[int]


def _as_centroid(vec) -> np.ndarray:
    arr = np.ascontiguousarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("centroid must be a non-empty 1-D vector")
    if not np.isfinite(arr).all():
        raise ValueError("centroid must be finite")
    return arr


def _pair_costs(size_a, cent_a: np.ndarray, sizes_b: np.ndarray, cents_b: np.ndarray) -> np.ndarray:
    """Ward cost of merging cluster a with each cluster in b (shared kernel).

    Every cost in this module flows through here so that scalar and batched
    call sites round identically; `cents_b` must be C-contiguous (k, c).
    """
    d = cents_b - cent_a
    sq = (d * d).sum(axis=1)
    return (sizes_b * size_a) / (sizes_b + size_a) * sq


def ward_cost(size_a: int, centroid_a, size_b: int, centroid_b) -> float:
    """SSE increase caused by merging two clusters: s_a*s_b/(s_a+s_b) * |mu_a-mu_b|^2."""
    if size_a < 1 or size_b < 1:
        raise ValueError("cluster sizes must be >= 1")
    a = _as_centroid(centroid_a)
    b = _as_centroid(centroid_b)
    if a.shape != b.shape:
        raise ValueError("centroid dimensions differ")
    return float(_pair_costs(size_a, a, np.array([size_b], dtype=np.int64), b[None, :])[0])


def merge_centroid(size_a: int, centroid_a, size_b: int, centroid_b) -> tuple[int, np.ndarray]:
    """Size and size-weighted mean of the merged cluster."""
    if size_a < 1 or size_b < 1:
        raise ValueError("cluster sizes must be >= 1")
    a = _as_centroid(centroid_a)
    b = _as_centroid(centroid_b)
    if a.shape != b.shape:
        raise ValueError("centroid dimensions differ")
    s = size_a + size_b
    return s, (size_a * a + size_b * b) / s


def build_adjacency(height_patches: int, width_patches: int) -> RegionAdjacency:
    """4-adjacency of the patch lattice: 2*H*W - H - W edges."""
    if height_patches < 1 or width_patches < 1:
        raise ValueError("grid dimensions must be positive")
    edges: set[tuple[int, int]] = set()
    for r in range(height_patches):
        for c in range(width_patches):
            i = r * width_patches + c
            if c + 1 < width_patches:
                edges.add((i, i + 1))
            if r + 1 < height_patches:
                edges.add((i, i + width_patches))
    return RegionAdjacency(edges=edges, live=set(range(height_patches * width_patches)))


def _row_order(a: int, b: int, sizes: np.ndarray) -> tuple[int, int]:
    # larger cluster first; ties keep the smaller id first
    if sizes[b] > sizes[a]:
        return b, a
    return a, b


def _merge_constrained(feats: np.ndarray, h: int, w: int):
    """Lazy-deletion heap over adjacency edges; stale entries drop on pop."""
    n = h * w
    c = feats.shape[1]
    total = 2 * n - 1
    sizes = np.ones(total, dtype=np.int64)
    cents = np.zeros((total, c), dtype=np.float64)
    cents[:n] = feats
    alive = np.zeros(total, dtype=bool)
    alive[:n] = True

    base = build_adjacency(h, w)
    adj: list[set[int] | None] = [set() for _ in range(total)]
    ea = np.empty(len(base.edges), dtype=np.int64)
    eb = np.empty(len(base.edges), dtype=np.int64)
    for idx, (a, b) in enumerate(sorted(base.edges)):
        ea[idx], eb[idx] = a, b
        adj[a].add(b)
        adj[b].add(a)
    # leaves are singletons, so each edge cost is 0.5*|F_b - F_a|^2; routing the
    # precomputed differences through the shared kernel keeps rounding identical
    diffs = np.ascontiguousarray(cents[eb] - cents[ea])
    init_costs = _pair_costs(1, np.zeros(c), np.ones(len(ea), dtype=np.int64), diffs)
    heap = list(zip(init_costs.tolist(), ea.tolist(), eb.tolist()))
    heapq.heapify(heap)

    rows = np.empty((n - 1, 2), dtype=np.int64)
    costs = np.empty(n - 1, dtype=np.float64)
    for k in range(n - 1):
        while True:
            cost, a, b = heapq.heappop(heap)
            if alive[a] and alive[b]:
                break
        m = n + k
        sizes[m] = sizes[a] + sizes[b]
        cents[m] = (sizes[a] * cents[a] + sizes[b] * cents[b]) / sizes[m]
        rows[k] = _row_order(a, b, sizes)
        costs[k] = cost
        alive[a] = False
        alive[b] = False
        neighbors = (adj[a] | adj[b]) - {a, b}
        adj[a] = None
        adj[b] = None
        for x in neighbors:
            adj[x].discard(a)
            adj[x].discard(b)
            adj[x].add(m)
        adj[m] = neighbors
        alive[m] = True
        if neighbors:
            xs = np.fromiter(neighbors, dtype=np.int64)
            xs.sort()
            new_costs = _pair_costs(int(sizes[m]), cents[m], sizes[xs], np.ascontiguousarray(cents[xs]))
            for x, cv in zip(xs.tolist(), new_costs.tolist()):
                heapq.heappush(heap, (cv, x, m))
    return rows, sizes, cents, costs


def _merge_unconstrained(feats: np.ndarray, n: int):
    """Greedy global-argmin merge via per-row cached minima.

    Costs live in the upper triangle of a (2n-1)^2 buffer indexed by node id,
    so argmin scans resolve cost ties toward the smallest (min_id, max_id)
    pair exactly.  O(n^2) memory; fine for preprocessing-scale grids.
    """
    c = feats.shape[1]
    total = 2 * n - 1
    sizes = np.ones(total, dtype=np.int64)
    cents = np.zeros((total, c), dtype=np.float64)
    cents[:n] = feats
    buf = np.full((total, total), np.inf, dtype=np.float64)
    row_min = np.full(total, np.inf, dtype=np.float64)
    row_arg = np.full(total, -1, dtype=np.int64)
    alive = np.zeros(total, dtype=bool)
    alive[:n] = True
    for i in range(n - 1):
        buf[i, i + 1 : n] = _pair_costs(1, cents[i], sizes[i + 1 : n], cents[i + 1 : n])
        j = int(buf[i, i + 1 : n].argmin())
        row_min[i] = buf[i, i + 1 + j]
        row_arg[i] = i + 1 + j

    rows = np.empty((n - 1, 2), dtype=np.int64)
    costs = np.empty(n - 1, dtype=np.float64)
    width = n
    for k in range(n - 1):
        a = int(row_min[:width].argmin())
        b = int(row_arg[a])
        m = n + k
        sizes[m] = sizes[a] + sizes[b]
        cents[m] = (sizes[a] * cents[a] + sizes[b] * cents[b]) / sizes[m]
        rows[k] = _row_order(a, b, sizes)
        costs[k] = row_min[a]
        alive[a] = False
        alive[b] = False
        row_min[a] = np.inf
        row_min[b] = np.inf
        buf[:a, a] = np.inf
        buf[:b, b] = np.inf
        if k == n - 2:
            break
        # rows whose cached minimum sat in a dead column must rescan
        stale = np.nonzero((row_arg[:width] == a) | (row_arg[:width] == b))[0]
        for i in stale:
            if not alive[i]:
                continue
            seg = buf[i, i + 1 : width]
            if seg.size == 0:
                row_min[i] = np.inf
                row_arg[i] = -1
                continue
            j = int(seg.argmin())
            row_min[i] = seg[j]
            row_arg[i] = i + 1 + j
        live_ids = np.nonzero(alive[:width])[0]
        new_costs = _pair_costs(
            int(sizes[m]), cents[m], sizes[live_ids], np.ascontiguousarray(cents[live_ids])
        )
        buf[live_ids, width] = new_costs
        improved = live_ids[new_costs < row_min[live_ids]]
        row_min[improved] = buf[improved, width]
        row_arg[improved] = width
        alive[width] = True
        width += 1
    return rows, sizes, cents, costs


def bottom_up_merge(grid: FeatureGrid, use_connectivity: bool = True) -> MergeTree:
    """Build the Ward merge tree over a feature grid.

    With `use_connectivity` only lattice-adjacent clusters are candidates,
    which shrinks the search space and is substantially faster; without it
    every live pair competes.
    """
    grid.validate()
    n = grid.n_patches
    if n < 2:
        raise ValueError("need at least 2 patches to merge")
    feats = np.ascontiguousarray(
        grid.data.reshape(n, grid.channels), dtype=np.float64
    )
    if use_connectivity:
        rows, sizes, cents, costs = _merge_constrained(
            feats, grid.height_patches, grid.width_patches
        )
    else:
        rows, sizes, cents, costs = _merge_unconstrained(feats, n)
    if not np.isfinite(costs).all():
        raise RuntimeError("non-finite merge cost; feature grid validation failed upstream")
    return MergeTree(
        n_leaves=n,
        rows=rows,
        sizes=sizes,
        costs=costs,
        grid_dims=(grid.height_patches, grid.width_patches),
        connectivity_used=use_connectivity,
        centroids=cents,
    )


def brute_force_merge(grid: FeatureGrid, use_connectivity: bool = True) -> MergeTree:
    """Reference merge: rescan every live pair each step.

    O(n^3)-ish with memoized pair costs and from-scratch lattice connectivity
    checks; intended for tests and benchmarks on small grids (n <= 64 or so).
    """
    grid.validate()
    n = grid.n_patches
    if n < 2:
        raise ValueError("need at least 2 patches to merge")
    h, w = grid.height_patches, grid.width_patches
    feats = grid.data.reshape(n, grid.channels).astype(np.float64)

    leaf_neighbors: list[list[int]] = []
    for i in range(n):
        r, c = divmod(i, w)
        nbrs = []
        if r > 0:
            nbrs.append(i - w)
        if r + 1 < h:
            nbrs.append(i + w)
        if c > 0:
            nbrs.append(i - 1)
        if c + 1 < w:
            nbrs.append(i + 1)
        leaf_neighbors.append(nbrs)

    sizes_map = {i: 1 for i in range(n)}
    cents_map = {i: feats[i].copy() for i in range(n)}
    members = {i: {i} for i in range(n)}
    live: set[int] = set(range(n))
    cost_cache: dict[tuple[int, int], float] = {}

    def pair_cost(i: int, j: int) -> float:
        key = (i, j)
        if key not in cost_cache:
            cost_cache[key] = ward_cost(sizes_map[i], cents_map[i], sizes_map[j], cents_map[j])
        return cost_cache[key]

    def connected(i: int, j: int) -> bool:
        small, big = (members[i], members[j])
        if len(small) > len(big):
            small, big = big, small
        return any(nb in big for leaf in small for nb in leaf_neighbors[leaf])

    rows = np.empty((n - 1, 2), dtype=np.int64)
    out_sizes = np.ones(2 * n - 1, dtype=np.int64)
    out_cents = np.zeros((2 * n - 1, grid.channels), dtype=np.float64)
    out_cents[:n] = feats
    costs = np.empty(n - 1, dtype=np.float64)

    for k in range(n - 1):
        ordered = sorted(live)
        best: tuple[float, int, int] | None = None
        for ai, i in enumerate(ordered):
            for j in ordered[ai + 1 :]:
                if use_connectivity and not connected(i, j):
                    continue
                cand = (pair_cost(i, j), i, j)
                if best is None or cand < best:
                    best = cand
        assert best is not None
        cost, a, b = best
        m = n + k
        s, mu = merge_centroid(sizes_map[a], cents_map[a], sizes_map[b], cents_map[b])
        sizes_map[m] = s
        cents_map[m] = mu
        members[m] = members[a] | members[b]
        out_sizes[m] = s
        out_cents[m] = mu
        rows[k] = (a, b) if sizes_map[a] >= sizes_map[b] else (b, a)
        costs[k] = cost
        live -= {a, b}
        live.add(m)
    return MergeTree(
        n_leaves=n,
        rows=rows,
        sizes=out_sizes,
        costs=costs,
        grid_dims=(h, w),
        connectivity_used=use_connectivity,
        centroids=out_cents,
    )


def parents_of(tree: MergeTree) -> np.ndarray:
    """Parent id per node; the root maps to -1."""
    parents = np.full(tree.n_nodes, -1, dtype=np.int64)
    for k, (a, b) in enumerate(tree.rows):
        parents[a] = tree.n_leaves + k
        parents[b] = tree.n_leaves + k
    return parents


def leaf_mask_of_node(tree: MergeTree, node_id: int) -> np.ndarray:
    """Boolean flags over leaves that belong to the subtree of node_id."""
    if not 0 <= node_id < tree.n_nodes:
        raise ValueError(f"node id {node_id} out of range")
    n = tree.n_leaves
    flags = np.zeros(n, dtype=bool)
    stack = [node_id]
    while stack:
        node = stack.pop()
        if node < n:
            flags[node] = True
        else:
            stack.extend(tree.rows[node - n])
    return flags


def _component_is_connected(flags: np.ndarray, h: int, w: int) -> bool:
    """Flood fill over the 4-neighborhood of the flagged patches."""
    grid = flags.reshape(h, w)
    idx = np.argwhere(grid)
    if len(idx) == 0:
        return False
    seen = np.zeros_like(grid, dtype=bool)
    stack = [tuple(idx[0])]
    seen[tuple(idx[0])] = True
    count = 1
    while stack:
        r, c = stack.pop()
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and grid[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                count += 1
                stack.append((rr, cc))
    return count == len(idx)


def validate_tree(tree: MergeTree, check_connectivity: bool = False) -> None:
    """Check structural invariants; raise ValidationError on the first violation."""
    n = tree.n_leaves
    if n < 2:
        raise ValidationError("tree must have at least 2 leaves")
    if tree.rows.shape != (n - 1, 2):
        raise ValidationError(f"rows shape {tree.rows.shape} != {(n - 1, 2)}")
    if tree.sizes.shape != (2 * n - 1,):
        raise ValidationError("sizes length must be 2n-1")
    if tree.costs.shape != (n - 1,):
        raise ValidationError("costs length must be n-1")
    h, w = tree.grid_dims
    if h * w != n:
        raise ValidationError("grid_dims do not multiply to n_leaves")
    seen = np.zeros(2 * n - 1, dtype=bool)
    for k in range(n - 1):
        a, b = int(tree.rows[k, 0]), int(tree.rows[k, 1])
        for child in (a, b):
            if not 0 <= child < n + k:
                raise ValidationError(f"row {k} child {child} out of range")
            if seen[child]:
                raise ValidationError(f"node {child} appears as a child twice")
            seen[child] = True
        if tree.sizes[n + k] != tree.sizes[a] + tree.sizes[b]:
            raise ValidationError(f"size additivity fails at node {n + k}")
    if seen[tree.root]:
        raise ValidationError("root appears as a child")
    if not seen[: tree.root].all():
        raise ValidationError("some node never appears as a child")
    if (tree.sizes[:n] != 1).any():
        raise ValidationError("leaf sizes must be 1")
    if tree.sizes[tree.root] != n:
        raise ValidationError("root size must equal n_leaves")
    if (tree.costs < 0).any() or not np.isfinite(tree.costs).all():
        raise ValidationError("costs must be finite and non-negative")
    if tree.centroids is not None and tree.centroids.shape[0] != 2 * n - 1:
        raise ValidationError("centroids length must be 2n-1")
    if check_connectivity and tree.connectivity_used:
        for node in range(n, 2 * n - 1):
            if not _component_is_connected(leaf_mask_of_node(tree, node), h, w):
                raise ValidationError(f"node {node} is not 4-connected")


def recompute_centroids(tree: MergeTree, grid: FeatureGrid) -> MergeTree:
    """Fill centroids from leaf features by replaying the merges."""
    if grid.n_patches != tree.n_leaves:
        raise ValueError("grid does not match tree leaf count")
    n = tree.n_leaves
    cents = np.zeros((2 * n - 1, grid.channels), dtype=np.float64)
    cents[:n] = grid.data.reshape(n, grid.channels).astype(np.float64)
    sizes = np.ones(2 * n - 1, dtype=np.int64)
    for k in range(n - 1):
        a, b = sorted(int(x) for x in tree.rows[k])
        s, mu = merge_centroid(int(sizes[a]), cents[a], int(sizes[b]), cents[b])
        sizes[n + k] = s
        cents[n + k] = mu
    return MergeTree(
        n_leaves=tree.n_leaves,
        rows=tree.rows,
        sizes=tree.sizes,
        costs=tree.costs,
        grid_dims=tree.grid_dims,
        connectivity_used=tree.connectivity_used,
        centroids=cents,
    )


def serialize_tree(tree: MergeTree, path, include_centroids: bool = True) -> None:
    """Write the tree as a deterministic JSON document."""
    validate_tree(tree)
    doc = {
        "format": TREE_FORMAT,
        "version": TREE_VERSION,
        "n_leaves": tree.n_leaves,
        "grid_dims": list(tree.grid_dims),
        "connectivity_used": tree.connectivity_used,
        "rows": tree.rows.tolist(),
        "sizes": tree.sizes.tolist(),
        "costs": tree.costs.tolist(),
        "has_centroids": bool(include_centroids and tree.centroids is not None),
    }
    if doc["has_centroids"]:
        doc["centroids"] = tree.centroids.tolist()
    with open(path, "w", encoding="ascii") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")


def deserialize_tree(path) -> MergeTree:
    """Read a tree document and re-validate its invariants."""
    try:
        with open(path, "r", encoding="ascii") as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"not a tree document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != TREE_FORMAT:
        raise FormatError("missing tree format marker")
    if doc.get("version") != TREE_VERSION:
        raise FormatError(f"unsupported tree version {doc.get('version')!r}")
    try:
        n = int(doc["n_leaves"])
        grid_dims = tuple(int(x) for x in doc["grid_dims"])
        tree = MergeTree(
            n_leaves=n,
            rows=np.asarray(doc["rows"], dtype=np.int64).reshape(max(n - 1, 0), 2),
            sizes=np.asarray(doc["sizes"], dtype=np.int64),
            costs=np.asarray(doc["costs"], dtype=np.float64),
            grid_dims=(grid_dims[0], grid_dims[1]),
            connectivity_used=bool(doc["connectivity_used"]),
            centroids=(
                np.asarray(doc["centroids"], dtype=np.float64)
                if doc.get("has_centroids")
                else None
            ),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed tree document: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    validate_tree(tree)
    return tree
