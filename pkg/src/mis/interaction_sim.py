"""Click simulation against binary masks and the 2-channel click encoding.

Masks are plain 2-D boolean numpy arrays.  Two click sources are provided:
random positive/negative clicks over a target region (training-style), and
the evaluation clicker that puts the next click at the center of the largest
error region between ground truth and prediction.

All distances are exact Euclidean; pixels outside the image count as
background, so a region touching the border still has a finite interior
depth.  Tie-breaks are lexicographic on (row, col), making every simulated
interaction replayable from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import FormatError

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Click:
    row: int
    col: int
    positive: bool
    order: int = 0


@dataclass(frozen=True)
class ClickMap:
    positive: np.ndarray  # bool (H, W)
    negative: np.ndarray  # bool (H, W)
    disk_radius: int


def _as_mask(m, name: str) -> np.ndarray:
    arr = np.asarray(m)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D mask")
    return arr.astype(bool)


def iou(a, b) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    a = _as_mask(a, "a")
    b = _as_mask(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


def interior_distance(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest non-mask pixel.

    The image border counts: pixels outside the array are treated as
    background, so a full-image mask peaks at its center.
    """
    padded = np.pad(np.asarray(mask, dtype=bool), 1)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def sample_random_clicks(
    target,
    max_pos: int,
    max_neg: int,
    margin: int = 5,
    rng: np.random.Generator | None = None,
) -> list[Click]:
    """Draw k_pos ~ U{1..max_pos} positive and k_neg ~ U{0..max_neg} negative clicks.

    Positives are uniform over the target eroded by `margin` (falling back to
    the raw target when erosion empties it); negatives are uniform over
    background pixels whose distance to the target lies in [margin, 4*margin]
    (falling back to any background).  Coordinates never repeat.
    """
    target = _as_mask(target, "target")
    if not target.any():
        raise ValueError("target has no foreground")
    if max_pos < 1:
        raise ValueError("max_pos must be >= 1")
    if max_neg < 0 or margin < 0:
        raise ValueError("max_neg and margin must be non-negative")
    if rng is None:
        rng = np.random.default_rng(0)

    k_pos = int(rng.integers(1, max_pos + 1))
    eroded = interior_distance(target) > margin
    pool = eroded if eroded.any() else target
    coords = np.argwhere(pool)
    take = min(k_pos, len(coords))
    chosen = coords[rng.choice(len(coords), size=take, replace=False)]
    clicks = [Click(int(r), int(c), True, i) for i, (r, c) in enumerate(chosen)]

    background = ~target
    if background.any() and max_neg > 0:
        k_neg = int(rng.integers(0, max_neg + 1))
        dist = ndimage.distance_transform_edt(background)
        band = background & (dist >= margin) & (dist <= 4 * margin)
        pool = band if band.any() else background
        coords = np.argwhere(pool)
        take = min(k_neg, len(coords))
        if take:
            chosen = coords[rng.choice(len(coords), size=take, replace=False)]
            base = len(clicks)
            clicks += [
                Click(int(r), int(c), False, base + i) for i, (r, c) in enumerate(chosen)
            ]
    return clicks


def next_click_center(gt, pred, exclude=()) -> Click:
    """Click at the deep center of the largest error region.

    False negatives and false positives split into 4-connected components;
    the largest one wins (ties prefer false negatives, then the component
    whose first row-major pixel is smallest).  Within it, the pixel farthest
    from the component's complement is returned, ties toward small (row, col).
    Pixels listed in `exclude` are skipped unless the whole component is
    excluded.  The click is positive iff the component is a false negative.
    """
    gt = _as_mask(gt, "gt")
    pred = _as_mask(pred, "pred")
    if gt.shape != pred.shape:
        raise ValueError(f"mask shapes differ: {gt.shape} vs {pred.shape}")
    false_neg = gt & ~pred
    false_pos = pred & ~gt
    if not false_neg.any() and not false_pos.any():
        raise ValueError("prediction equals ground truth; no error to click")

    best_key = None
    best_component = None
    best_positive = True
    for err, is_fn in ((false_neg, True), (false_pos, False)):
        if not err.any():
            continue
        labels, n_comp = ndimage.label(err, structure=_CROSS)
        flat = labels.ravel()
        areas = np.bincount(flat, minlength=n_comp + 1)
        comp_ids, first_idx = np.unique(flat, return_index=True)
        for comp, first in zip(comp_ids.tolist(), first_idx.tolist()):
            if comp == 0:
                continue
            key = (-int(areas[comp]), 0 if is_fn else 1, first)
            if best_key is None or key < best_key:
                best_key = key
                best_component = labels == comp
                best_positive = is_fn

    distances = interior_distance(best_component)
    eligible = best_component.copy()
    for r, c in exclude:
        if 0 <= r < eligible.shape[0] and 0 <= c < eligible.shape[1]:
            eligible[r, c] = False
    if not eligible.any():
        eligible = best_component
    scored = np.where(eligible, distances, -1.0)
    row, col = divmod(int(scored.argmax()), gt.shape[1])
    return Click(row, col, best_positive, 0)


def encode_click_map(clicks, height: int, width: int, disk_radius: int = 5) -> ClickMap:
    """Stamp each click as an inclusive Euclidean disk into its sign channel."""
    if height < 1 or width < 1:
        raise ValueError("map dimensions must be positive")
    if disk_radius < 0:
        raise ValueError("disk_radius must be non-negative")
    channels = (np.zeros((height, width), bool), np.zeros((height, width), bool))
    span = np.arange(-disk_radius, disk_radius + 1)
    disk = span[:, None] ** 2 + span[None, :] ** 2 <= disk_radius**2
    for click in clicks:
        if not (0 <= click.row < height and 0 <= click.col < width):
            raise ValueError(f"click ({click.row}, {click.col}) out of bounds")
        grid = channels[0] if click.positive else channels[1]
        r0 = max(0, click.row - disk_radius)
        r1 = min(height, click.row + disk_radius + 1)
        c0 = max(0, click.col - disk_radius)
        c1 = min(width, click.col + disk_radius + 1)
        dr0 = r0 - (click.row - disk_radius)
        dc0 = c0 - (click.col - disk_radius)
        grid[r0:r1, c0:c1] |= disk[dr0 : dr0 + (r1 - r0), dc0 : dc0 + (c1 - c0)]
    return ClickMap(positive=channels[0], negative=channels[1], disk_radius=disk_radius)


def clicks_to_csv(clicks) -> str:
    """Serialize clicks as `order,row,col,sign` lines (sign is + or -)."""
    lines = ["order,row,col,sign"]
    for click in clicks:
        lines.append(
            f"{click.order},{click.row},{click.col},{'+' if click.positive else '-'}"
        )
    return "\n".join(lines) + "\n"


def clicks_from_csv(text: str) -> list[Click]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != "order,row,col,sign":
        raise FormatError("missing clicks CSV header")
    clicks = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4 or parts[3] not in ("+", "-"):
            raise FormatError(f"bad clicks CSV line: {ln!r}")
        clicks.append(Click(int(parts[1]), int(parts[2]), parts[3] == "+", int(parts[0])))
    return clicks
