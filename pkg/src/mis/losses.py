"""Training-objective kernels with analytic gradients w.r.t. the prediction.

The objective couples a binary cross entropy term against a target mask with
a local smoothness penalty: within each pixel's 5x5 neighborhood, prediction
differences are weighted by a bilateral affinity built from pixel position,
luma, and chroma.  Gradients stop at the prediction field; there is no
network here.

Color is BT.601 full-range YUV from 8-bit RGB (offsets dropped, only
differences matter): luma = 0.299 R + 0.587 G + 0.114 B,
u = -0.168736 R - 0.331264 G + 0.5 B, v = 0.5 R - 0.418688 G - 0.081312 B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMAS = (8.0, 8.0, 4.0)  # spatial px, luma, chroma in 8-bit units
BCE_EPS = 1e-7
WINDOW_RADIUS = 2  # 5x5 neighborhood

_OFFSETS = [
    (dr, dc)
    for dr in range(-WINDOW_RADIUS, WINDOW_RADIUS + 1)
    for dc in range(-WINDOW_RADIUS, WINDOW_RADIUS + 1)
    if (dr, dc) != (0, 0)
]


@dataclass(frozen=True)
class PixelFeatures:
    """Per-pixel luma/chroma planes; positions are implicit in the grid."""

    luma: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.luma.shape


@dataclass(frozen=True)
class AffinityField:
    """weights[r, c, dr+2, dc+2] is the affinity from (r, c) to (r+dr, c+dc).

    Self and out-of-bounds slots are zero.
    """

    weights: np.ndarray  # (H, W, 5, 5) float64
    sigmas: tuple[float, float, float]


def pixel_features_from_rgb(rgb) -> PixelFeatures:
    """BT.601 full-range luma/chroma planes from an (H, W, 3) image."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return PixelFeatures(
        luma=0.299 * r + 0.587 * g + 0.114 * b,
        u=-0.168736 * r - 0.331264 * g + 0.5 * b,
        v=0.5 * r - 0.418688 * g - 0.081312 * b,
    )


def pair_affinity(dr, dc, dluma, du, dv, sigmas=DEFAULT_SIGMAS) -> float:
    """Bilateral weight for one pixel pair from coordinate/color deltas."""
    sxy, sl, suv = sigmas
    if sxy <= 0 or sl <= 0 or suv <= 0:
        raise ValueError("sigmas must be positive")
    exponent = (
        (dr * dr + dc * dc) / (2.0 * sxy * sxy)
        + (dluma * dluma) / (2.0 * sl * sl)
        + (du * du + dv * dv) / (2.0 * suv * suv)
    )
    return float(np.exp(-exponent))


def _window_slices(h: int, w: int, dr: int, dc: int):
    """In-bounds source/destination slices for a (dr, dc) neighbor shift."""
    r0, r1 = max(0, -dr), h - max(0, dr)
    c0, c1 = max(0, -dc), w - max(0, dc)
    src = (slice(r0, r1), slice(c0, c1))
    dst = (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
    return src, dst


def bilateral_affinity(features: PixelFeatures, sigmas=DEFAULT_SIGMAS) -> AffinityField:
    """Affinity to every in-bounds 5x5 neighbor of every pixel."""
    sxy, sl, suv = (float(s) for s in sigmas)
    if sxy <= 0 or sl <= 0 or suv <= 0:
        raise ValueError("sigmas must be positive")
    h, w = features.shape
    weights = np.zeros((h, w, 2 * WINDOW_RADIUS + 1, 2 * WINDOW_RADIUS + 1))
    for dr, dc in _OFFSETS:
        src, dst = _window_slices(h, w, dr, dc)
        dl = features.luma[src] - features.luma[dst]
        du = features.u[src] - features.u[dst]
        dv = features.v[src] - features.v[dst]
        exponent = (
            (dr * dr + dc * dc) / (2.0 * sxy * sxy)
            + (dl * dl) / (2.0 * sl * sl)
            + (du * du + dv * dv) / (2.0 * suv * suv)
        )
        weights[src[0], src[1], dr + WINDOW_RADIUS, dc + WINDOW_RADIUS] = np.exp(-exponent)
    return AffinityField(weights=weights, sigmas=(sxy, sl, suv))


def neighbor_counts(h: int, w: int) -> np.ndarray:
    """Number of in-bounds 5x5 neighbors (self excluded) per pixel."""
    rows = np.minimum(np.arange(h), WINDOW_RADIUS) + np.minimum(
        np.arange(h)[::-1], WINDOW_RADIUS
    ) + 1
    cols = np.minimum(np.arange(w), WINDOW_RADIUS) + np.minimum(
        np.arange(w)[::-1], WINDOW_RADIUS
    ) + 1
    return rows[:, None] * cols[None, :] - 1


def _check_prediction(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise ValueError("prediction must be 2-D")
    if q.size and ((q < 0).any() or (q > 1).any()):
        raise ValueError("prediction values must lie in [0, 1]")
    return q


def smoothness_loss(q, affinity: AffinityField) -> tuple[float, np.ndarray]:
    """Affinity-weighted squared prediction differences over 5x5 windows.

    loss = sum_i (1/|N_i|) sum_{j in N_i} W_ij (q_i - q_j)^2, with N_i the
    in-bounds window minus the pixel itself.  Returns (loss, dloss/dq).
    """
    q = _check_prediction(q)
    h, w = q.shape
    if affinity.weights.shape[:2] != (h, w):
        raise ValueError("affinity field does not match prediction shape")
    inv_n = 1.0 / neighbor_counts(h, w)
    loss = 0.0
    grad = np.zeros_like(q)
    for dr, dc in _OFFSETS:
        src, dst = _window_slices(h, w, dr, dc)
        wts = affinity.weights[src[0], src[1], dr + WINDOW_RADIUS, dc + WINDOW_RADIUS]
        diff = q[src] - q[dst]
        weighted = wts * diff * inv_n[src]
        loss += float((weighted * diff).sum())
        grad[src] += 2.0 * weighted
        grad[dst] -= 2.0 * weighted
    return loss, grad


def bce_loss(target, q, eps: float = BCE_EPS) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy with the prediction clamped to [eps, 1-eps].

    Returns (loss, dloss/dq); the gradient is zero where the clamp is active.
    """
    q = _check_prediction(q)
    target = np.asarray(target)
    if target.shape != q.shape:
        raise ValueError(f"mask shape {target.shape} != prediction shape {q.shape}")
    m = target.astype(np.float64)
    qc = np.clip(q, eps, 1.0 - eps)
    n = q.size
    loss = float(-(m * np.log(qc) + (1.0 - m) * np.log(1.0 - qc)).sum() / n)
    inside = (q > eps) & (q < 1.0 - eps)
    grad = np.where(inside, (-m / qc + (1.0 - m) / (1.0 - qc)) / n, 0.0)
    return loss, grad


def total_loss(target, q, affinity: AffinityField, lam: float = 10.0) -> tuple[float, np.ndarray]:
    """bce + lam * smoothness, with the matching gradient sum."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    bce_value, bce_grad = bce_loss(target, q)
    smooth_value, smooth_grad = smoothness_loss(q, affinity)
    return bce_value + lam * smooth_value, bce_grad + lam * smooth_grad
