"""Tests for PSNR, SSIM (value and gradient), and AUSE."""

import numpy as np
import pytest

from stochsplat.metrics import ause, psnr, ssim, ssim_value_and_grad


def rand_image(rng, h, w):
    return rng.uniform(0.0, 1.0, size=(h, w, 3))


class TestPsnr:
    def test_identical_is_inf(self):
        img = rand_image(np.random.default_rng(0), 8, 8)
        assert psnr(img, img) == float("inf")

    def test_zero_vs_one_is_zero_db(self):
        zeros = np.zeros((4, 4, 3))
        ones = np.ones((4, 4, 3))
        assert psnr(zeros, ones) == pytest.approx(0.0)

    def test_uniform_offset_twenty_db(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0)

    def test_clamps_before_comparing(self):
        a = np.full((2, 2, 3), -1.0)  # clamps to 0
        b = np.full((2, 2, 3), 2.0)  # clamps to 1
        assert psnr(a, b) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))

    def test_inf_serializes_as_inf(self):
        img = np.zeros((2, 2, 3))
        assert str(psnr(img, img)) == "inf"


class TestSsim:
    def test_identical_is_exactly_one(self):
        img = rand_image(np.random.default_rng(1), 16, 16)
        assert ssim(img, img) == 1.0

    def test_negation_is_negative(self):
        # 0.5-centered checkerboard; windows have high variance, so the
        # anti-correlated structure term dominates.
        grid = np.indices((16, 16)).sum(axis=0) % 2
        img = np.repeat((0.1 + 0.8 * grid)[:, :, None], 3, axis=2)
        assert ssim(img, 1.0 - img) < 0.0

    def test_constant_images_luminance_only(self):
        a = np.full((16, 16, 3), 0.3)
        b = np.full((16, 16, 3), 0.7)
        c1 = 0.01**2
        luminance = (2 * 0.3 * 0.7 + c1) / (0.3**2 + 0.7**2 + c1)
        assert ssim(a, b) == pytest.approx(luminance, abs=1e-9)

    def test_small_image_falls_back_to_global_stats(self):
        rng = np.random.default_rng(2)
        img = rand_image(rng, 8, 8)
        assert ssim(img, img) == 1.0
        assert -1.0 <= ssim(img, rand_image(rng, 8, 8)) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16, 3)), np.zeros((16, 12, 3)))


class TestSsimGradient:
    @pytest.mark.parametrize("size", [8, 16])
    def test_matches_finite_differences(self, size):
        rng = np.random.default_rng(3)
        x = rand_image(rng, size, size)
        y = rand_image(rng, size, size)
        _, grad = ssim_value_and_grad(x, y)
        h = 1e-5
        coords = [
            (rng.integers(size), rng.integers(size), rng.integers(3)) for _ in range(40)
        ]
        for i, j, c in coords:
            xp = x.copy()
            xp[i, j, c] += h
            xm = x.copy()
            xm[i, j, c] -= h
            fd = (ssim(xp, y) - ssim(xm, y)) / (2 * h)
            assert grad[i, j, c] == pytest.approx(fd, rel=1e-4, abs=1e-9)

    def test_value_matches_ssim(self):
        rng = np.random.default_rng(4)
        x, y = rand_image(rng, 16, 16), rand_image(rng, 16, 16)
        value, _ = ssim_value_and_grad(x, y)
        assert value == pytest.approx(ssim(x, y), abs=1e-15)


def brute_force_ause(errors, uncertainty, steps=100):
    """Literal removal loops, used as the oracle for the vectorized version."""
    n = len(errors)
    total = errors.sum()
    order_u = np.argsort(-uncertainty, kind="stable")
    order_e = np.argsort(-errors, kind="stable")
    diffs = []
    for k in range(steps):
        n_remove = (k * n) // steps
        kept_u = total - errors[order_u[:n_remove]].sum()
        kept_e = total - errors[order_e[:n_remove]].sum()
        diffs.append((kept_u - kept_e) / total)
    return float(np.mean(diffs))


class TestAuse:
    def test_oracle_ordering_is_zero(self):
        rng = np.random.default_rng(5)
        errors = rng.uniform(0, 1, 500)
        assert ause(errors, errors) == pytest.approx(0.0, abs=1e-12)

    def test_anticorrelated_is_brute_force_maximum(self):
        rng = np.random.default_rng(6)
        errors = rng.uniform(0, 1, 400)
        score = ause(errors, -errors)
        assert score == pytest.approx(brute_force_ause(errors, -errors), abs=1e-6)
        # No ordering can exceed the anti-oracle at any sparsification level.
        for _ in range(10):
            other = rng.permutation(len(errors)).astype(float)
            assert ause(errors, other) <= score + 1e-12

    def test_constant_uncertainty_matches_brute_force(self):
        rng = np.random.default_rng(7)
        errors = rng.uniform(0, 1, 300)
        uncertainty = np.full(300, 0.5)
        assert ause(errors, uncertainty) == pytest.approx(
            brute_force_ause(errors, uncertainty), abs=1e-12
        )

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(8)
        errors = rng.uniform(0, 1, 256)
        uncertainty = rng.uniform(0, 1, 256)
        base = ause(errors, uncertainty)
        assert ause(errors, 10.0 * uncertainty + 3.0) == pytest.approx(base, abs=1e-12)
        assert ause(errors, np.exp(uncertainty)) == pytest.approx(base, abs=1e-12)

    def test_all_zero_errors(self):
        assert ause(np.zeros(50), np.arange(50.0)) == 0.0

    def test_score_in_unit_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            e = rng.uniform(0, 5, 128)
            u = rng.normal(size=128)
            assert 0.0 <= ause(e, u) <= 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ause(np.ones(4), np.ones(5))

    def test_negative_errors_rejected(self):
        with pytest.raises(ValueError):
            ause(np.array([-1.0, 1.0]), np.ones(2))
