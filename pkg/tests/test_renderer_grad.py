"""Finite-difference verification of the renderer's backward pass.

The objective is a fixed random weighting of the output pixels, so its
per-pixel gradient is the weight image itself and the analytic chain can be
compared coordinate by coordinate against central differences.
"""

import numpy as np
import pytest
from helpers import make_camera, random_scene, random_unit_illumination

from stochsplat.renderer import render, render_backward
from stochsplat.scene import APPEARANCE_TRANSFER, flatten, unflatten


def weighted_pixel_sum(scene, camera, weights, illumination=None):
    out = render(scene, camera, illumination)
    return float(np.sum(out.color.data * weights))


def check_against_fd(analytic, numeric, rtol=1e-3, min_grad=1e-6, required=0.99):
    """Fraction of non-negligible coordinates within tolerance must pass."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    mask = np.abs(analytic) > min_grad
    if not mask.any():
        return 1.0
    rel = np.abs(analytic[mask] - numeric[mask]) / np.maximum(
        np.abs(numeric[mask]), min_grad
    )
    frac = float(np.mean(rel < rtol))
    assert frac >= required, f"only {frac:.3f} of gradients within tolerance"
    return frac


class TestThetaGradients:
    @pytest.mark.parametrize("mode,seed", [("sh", 0), ("transfer", 1)])
    def test_full_parameter_vector(self, mode, seed):
        rng = np.random.default_rng(seed)
        scene = random_scene(rng, 8, mode=mode)
        camera = make_camera(lat=0.25, lon=0.8, radius=3.0, size=16)
        illumination = random_unit_illumination(rng) if mode == "transfer" else None
        weights = rng.normal(size=(16, 16, 3))

        out = render(scene, camera, illumination, record=True)
        grads = render_backward(scene, camera, weights, out)

        theta, layout = flatten(scene)
        h = 1e-4
        numeric = np.zeros_like(theta)
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            numeric[k] = (
                weighted_pixel_sum(unflatten(tp, layout), camera, weights, illumination)
                - weighted_pixel_sum(unflatten(tm, layout), camera, weights, illumination)
            ) / (2 * h)
        check_against_fd(grads.theta, numeric)

    def test_zero_loss_gradient_gives_zero(self):
        rng = np.random.default_rng(2)
        scene = random_scene(rng, 5)
        camera = make_camera(lat=0.1, lon=1.5, radius=3.0, size=12)
        out = render(scene, camera, record=True)
        grads = render_backward(scene, camera, np.zeros((12, 12, 3)), out)
        np.testing.assert_array_equal(grads.theta, 0.0)
        np.testing.assert_array_equal(grads.camera, 0.0)

    def test_missing_records_raises(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng, 3)
        camera = make_camera(size=8)
        out = render(scene, camera)
        with pytest.raises(ValueError, match="record"):
            render_backward(scene, camera, np.zeros((8, 8, 3)), out)


class TestCameraGradients:
    @pytest.mark.parametrize("seed", [4, 5])
    def test_lat_lon_radius(self, seed):
        rng = np.random.default_rng(seed)
        scene = random_scene(rng, 10)
        camera = make_camera(lat=0.4, lon=2.2, radius=3.1, size=16)
        weights = rng.normal(size=(16, 16, 3))
        out = render(scene, camera, record=True)
        grads = render_backward(scene, camera, weights, out)

        h = 1e-5
        base = (camera.latitude, camera.longitude, camera.radius)
        numeric = np.zeros(3)
        for k in range(3):
            plus, minus = list(base), list(base)
            plus[k] += h
            minus[k] -= h
            numeric[k] = (
                weighted_pixel_sum(scene, camera.with_angles(*plus), weights)
                - weighted_pixel_sum(scene, camera.with_angles(*minus), weights)
            ) / (2 * h)
        np.testing.assert_allclose(grads.camera, numeric, rtol=2e-3, atol=1e-7)


class TestIlluminationGradients:
    def test_pi_vector(self):
        rng = np.random.default_rng(6)
        scene = random_scene(rng, 8, mode=APPEARANCE_TRANSFER)
        camera = make_camera(lat=-0.3, lon=0.5, radius=3.0, size=16)
        illumination = random_unit_illumination(rng)
        weights = rng.normal(size=(16, 16, 3))
        out = render(scene, camera, illumination, record=True)
        grads = render_backward(scene, camera, weights, out)

        h = 1e-5
        numeric = np.zeros(16)
        for k in range(16):
            ip, im = illumination.copy(), illumination.copy()
            ip[k] += h
            im[k] -= h
            numeric[k] = (
                weighted_pixel_sum(scene, camera, weights, ip)
                - weighted_pixel_sum(scene, camera, weights, im)
            ) / (2 * h)
        np.testing.assert_allclose(grads.illumination, numeric, rtol=2e-3, atol=1e-8)

    def test_sh_mode_has_no_illumination_gradient(self):
        rng = np.random.default_rng(7)
        scene = random_scene(rng, 4)
        camera = make_camera(size=10)
        out = render(scene, camera, record=True)
        grads = render_backward(scene, camera, np.ones((10, 10, 3)), out)
        assert grads.illumination is None
