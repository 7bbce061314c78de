"""Tests for the real spherical harmonics basis."""

import numpy as np
import pytest

import stochsplat.sh as sh
from stochsplat.sh import sh_basis, sh_basis_grad, sh_eval


def sphere_quadrature(n_theta=100, n_phi=100):
    """Product quadrature over the unit sphere (Gauss-Legendre x uniform).

    Exact for the polynomial integrands that products of the first four
    bands produce, so the Gram matrix oracle is limited only by float error.
    """
    mu, w_mu = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    w_phi = 2.0 * np.pi / n_phi
    sin_theta = np.sqrt(1.0 - mu**2)
    dirs = np.stack(
        [
            np.outer(sin_theta, np.cos(phi)),
            np.outer(sin_theta, np.sin(phi)),
            np.outer(mu, np.ones_like(phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = (np.outer(w_mu, np.ones_like(phi)) * w_phi).reshape(-1)
    return dirs, weights


class TestBasisValues:
    def test_constant_band(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            assert sh_eval(d)[0] == pytest.approx(0.2820948, abs=1e-7)

    def test_linear_band_along_z(self):
        basis = sh_eval(np.array([0.0, 0.0, 1.0]))
        assert basis[2] == pytest.approx(np.sqrt(3.0 / (4.0 * np.pi)))
        assert basis[1] == 0.0
        assert basis[3] == 0.0

    def test_orthonormality_gram_matrix(self):
        dirs, weights = sphere_quadrature()
        basis = sh_basis(dirs)  # (n, 16)
        gram = basis.T @ (weights[:, None] * basis)
        np.testing.assert_allclose(gram, np.eye(16), atol=1e-2)

    def test_non_unit_direction_normalized(self):
        d = np.array([0.0, 0.0, 2.0])
        np.testing.assert_allclose(sh_eval(d), sh_eval(np.array([0.0, 0.0, 1.0])))

    def test_debug_flag_warns(self):
        sh.DEBUG = True
        try:
            with pytest.warns(UserWarning):
                sh_eval(np.array([0.0, 0.0, 2.0]))
        finally:
            sh.DEBUG = False

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            sh_eval(np.zeros(3))


class TestBasisGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        dirs = rng.normal(size=(20, 3))  # raw polynomial, no unit constraint
        grads = sh_basis_grad(dirs)
        h = 1e-6
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h
            fd = (sh_basis(dirs + step) - sh_basis(dirs - step)) / (2.0 * h)
            np.testing.assert_allclose(grads[:, :, axis], fd, atol=1e-7)
