import math

import numpy as np
import pytest

from mis import (
    AffinityField,
    bce_loss,
    bilateral_affinity,
    pair_affinity,
    pixel_features_from_rgb,
    smoothness_loss,
    total_loss,
)
from mis.losses import WINDOW_RADIUS, _OFFSETS, neighbor_counts

from helpers import finite_diff_grad


def random_features(rng, h, w):
    return pixel_features_from_rgb(rng.integers(0, 256, size=(h, w, 3)))


def uniform_affinity(h, w):
    return AffinityField(weights=np.ones((h, w, 5, 5)), sigmas=(1.0, 1.0, 1.0))


class TestPairAffinity:
    def test_adjacent_same_color(self):
        assert pair_affinity(0, 1, 0.0, 0.0, 0.0, sigmas=(1.0, 1.0, 1.0)) == pytest.approx(
            math.exp(-0.5), rel=1e-12
        )

    def test_offset_3_4_sigma_5(self):
        # spatial distance 5 with sigma_xy 5: exp(-25/50)
        assert pair_affinity(3, 4, 0.0, 0.0, 0.0, sigmas=(5.0, 1.0, 1.0)) == pytest.approx(
            math.exp(-0.5), rel=1e-12
        )

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            dr, dc = rng.integers(-2, 3, size=2)
            dl, du, dv = rng.normal(0, 50, size=3)
            w = pair_affinity(dr, dc, dl, du, dv)
            assert 0.0 < w <= 1.0

    def test_zero_sigma_rejected(self):
        with pytest.raises(ValueError):
            pair_affinity(0, 1, 0.0, 0.0, 0.0, sigmas=(0.0, 1.0, 1.0))


class TestBilateralAffinity:
    def test_symmetry_exact(self):
        rng = np.random.default_rng(1)
        field = bilateral_affinity(random_features(rng, 7, 9))
        w = field.weights
        h_, w_ = 7, 9
        for dr, dc in _OFFSETS:
            for r in range(h_):
                for c in range(w_):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h_ and 0 <= cc < w_:
                        forward = w[r, c, dr + WINDOW_RADIUS, dc + WINDOW_RADIUS]
                        backward = w[rr, cc, -dr + WINDOW_RADIUS, -dc + WINDOW_RADIUS]
                        assert forward == backward

    def test_range_and_masking(self):
        rng = np.random.default_rng(2)
        # extreme color deltas can underflow exp() to 0.0; generous sigmas keep
        # every in-bounds weight strictly inside (0, 1]
        field = bilateral_affinity(random_features(rng, 6, 6), sigmas=(8.0, 200.0, 200.0))
        w = field.weights
        assert (w[:, :, WINDOW_RADIUS, WINDOW_RADIUS] == 0).all()  # self slot
        for dr, dc in _OFFSETS:
            plane = w[:, :, dr + WINDOW_RADIUS, dc + WINDOW_RADIUS]
            rows = np.arange(6)[:, None] + dr
            cols = np.arange(6)[None, :] + dc
            in_bounds = (rows >= 0) & (rows < 6) & (cols >= 0) & (cols < 6)
            assert ((plane > 0) & (plane <= 1.0))[in_bounds].all()
            assert (plane[~in_bounds] == 0).all()

    def test_default_sigmas_stay_in_unit_interval(self):
        rng = np.random.default_rng(20)
        field = bilateral_affinity(random_features(rng, 8, 8))
        assert ((field.weights >= 0.0) & (field.weights <= 1.0)).all()

    def test_matches_pair_affinity(self):
        rng = np.random.default_rng(3)
        feats = random_features(rng, 5, 5)
        sigmas = (4.0, 6.0, 3.0)
        field = bilateral_affinity(feats, sigmas)
        for r, c, dr, dc in [(0, 0, 1, 1), (2, 3, -2, 1), (4, 4, -1, -2), (2, 2, 0, 2)]:
            rr, cc = r + dr, c + dc
            expected = pair_affinity(
                dr,
                dc,
                feats.luma[r, c] - feats.luma[rr, cc],
                feats.u[r, c] - feats.u[rr, cc],
                feats.v[r, c] - feats.v[rr, cc],
                sigmas,
            )
            got = field.weights[r, c, dr + WINDOW_RADIUS, dc + WINDOW_RADIUS]
            assert got == pytest.approx(expected, rel=1e-12)

    def test_bad_sigma(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            bilateral_affinity(random_features(rng, 3, 3), sigmas=(8.0, -1.0, 4.0))

    def test_bad_image_shape(self):
        with pytest.raises(ValueError):
            pixel_features_from_rgb(np.zeros((4, 4)))


class TestNeighborCounts:
    def test_small_grids(self):
        assert neighbor_counts(1, 2).tolist() == [[1, 1]]
        counts = neighbor_counts(6, 6)
        assert counts[3, 3] == 24  # interior
        assert counts[0, 0] == 8  # corner: 3x3 window minus self
        assert counts[0, 3] == 14  # top edge: 3x5 window minus self


class TestSmoothnessLoss:
    def test_constant_prediction_is_exactly_zero(self):
        rng = np.random.default_rng(5)
        field = bilateral_affinity(random_features(rng, 6, 7))
        loss, grad = smoothness_loss(np.full((6, 7), 0.37), field)
        assert loss == 0.0
        assert (grad == 0.0).all()

    def test_two_pixel_example(self):
        # 1x2 image, both weights 1, q = [0, 1]: each pixel has one neighbor
        loss, grad = smoothness_loss(np.array([[0.0, 1.0]]), uniform_affinity(1, 2))
        assert loss == 2.0
        assert grad.tolist() == [[-4.0, 4.0]]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        field = bilateral_affinity(random_features(rng, 8, 8))
        q = rng.uniform(0.05, 0.95, size=(8, 8))
        _, grad = smoothness_loss(q, field)
        fd = finite_diff_grad(lambda x: smoothness_loss(x, field)[0], q)
        assert np.abs(grad - fd).max() <= 1e-4

    def test_shift_invariance_exact_on_dyadic_values(self):
        rng = np.random.default_rng(7)
        field = bilateral_affinity(random_features(rng, 5, 5))
        q = rng.integers(0, 17, size=(5, 5)) / 64.0  # dyadic, <= 0.25
        base, _ = smoothness_loss(q, field)
        shifted, _ = smoothness_loss(q + 0.5, field)  # differences stay exact
        assert shifted == base

    def test_shift_invariance_general(self):
        rng = np.random.default_rng(8)
        field = bilateral_affinity(random_features(rng, 6, 6))
        q = rng.uniform(0.0, 0.4, size=(6, 6))
        base, _ = smoothness_loss(q, field)
        shifted, _ = smoothness_loss(q + 0.1234, field)
        assert shifted == pytest.approx(base, rel=1e-9, abs=1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            field = bilateral_affinity(random_features(rng, 5, 6))
            loss, _ = smoothness_loss(rng.uniform(0, 1, (5, 6)), field)
            assert loss >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            smoothness_loss(np.zeros((3, 3)), uniform_affinity(4, 4))


class TestBceLoss:
    def test_perfect_prediction_near_zero(self):
        target = np.ones((4, 4), bool)
        loss, _ = bce_loss(target, np.ones((4, 4)))
        assert 0.0 <= loss < 1e-6

    def test_half_probability_single_pixel(self):
        loss, _ = bce_loss(np.ones((1, 1), bool), np.full((1, 1), 0.5))
        assert loss == pytest.approx(math.log(2.0), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        target = rng.random((8, 8)) < 0.5
        q = rng.uniform(0.05, 0.95, size=(8, 8))
        _, grad = bce_loss(target, q)
        fd = finite_diff_grad(lambda x: bce_loss(target, x)[0], q)
        assert np.abs(grad - fd).max() <= 1e-4

    def test_gradient_zero_in_clamped_zone(self):
        target = np.ones((1, 2), bool)
        _, grad = bce_loss(target, np.array([[0.0, 1.0]]))
        assert (grad == 0.0).all()

    def test_non_negative(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            target = rng.random((5, 5)) < 0.5
            loss, _ = bce_loss(target, rng.uniform(0, 1, (5, 5)))
            assert loss >= 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            bce_loss(np.ones((2, 2), bool), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            bce_loss(np.ones((1, 1), bool), np.array([[1.5]]))


class TestTotalLoss:
    def test_lambda_zero_equals_bce_exactly(self):
        rng = np.random.default_rng(12)
        field = bilateral_affinity(random_features(rng, 6, 6))
        target = rng.random((6, 6)) < 0.5
        q = rng.uniform(0.1, 0.9, size=(6, 6))
        total_value, total_grad = total_loss(target, q, field, lam=0.0)
        bce_value, bce_grad = bce_loss(target, q)
        assert total_value == bce_value
        assert (total_grad == bce_grad).all()

    def test_default_lambda_is_ten(self):
        import inspect

        assert inspect.signature(total_loss).parameters["lam"].default == 10.0

    def test_constant_prediction_reduces_to_bce(self):
        rng = np.random.default_rng(13)
        field = bilateral_affinity(random_features(rng, 5, 5))
        target = rng.random((5, 5)) < 0.5
        q = np.full((5, 5), 0.25)
        total_value, _ = total_loss(target, q, field, lam=10.0)
        assert total_value == bce_loss(target, q)[0]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        field = bilateral_affinity(random_features(rng, 8, 8))
        target = rng.random((8, 8)) < 0.5
        q = rng.uniform(0.05, 0.95, size=(8, 8))
        _, grad = total_loss(target, q, field, lam=10.0)
        fd = finite_diff_grad(lambda x: total_loss(target, x, field, lam=10.0)[0], q)
        assert np.abs(grad - fd).max() <= 1e-4

    def test_negative_lambda_rejected(self):
        rng = np.random.default_rng(15)
        field = bilateral_affinity(random_features(rng, 3, 3))
        with pytest.raises(ValueError):
            total_loss(np.zeros((3, 3), bool), np.zeros((3, 3)), field, lam=-1.0)
