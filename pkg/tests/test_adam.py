"""Tests for the Adam optimizer."""

import numpy as np
import pytest

from stochsplat.adam import AdamState, adam_step


def adam_scalar_oracle(x0, grad_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Plain-float reimplementation of the update rule used as an oracle."""
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return x


class TestAdamStep:
    def test_zero_gradient_fixed_point(self):
        state = AdamState(learning_rate=0.1)
        params = np.array([1.0, -2.0, 3.0])
        out = adam_step(state, params, np.zeros(3))
        np.testing.assert_array_equal(out, params)
        assert state.step_count == 1

    def test_first_step_magnitude_equals_lr(self):
        state = AdamState(learning_rate=0.1)
        out = adam_step(state, np.array([0.0]), np.array([1.0]))
        assert out[0] == pytest.approx(-0.1, abs=1e-6)

    def test_quadratic_convergence_matches_oracle(self):
        state = AdamState(learning_rate=0.1)
        x = np.array([1.0])
        for _ in range(100):
            x = adam_step(state, x, 2.0 * x)
        expected = adam_scalar_oracle(1.0, lambda v: 2.0 * v, lr=0.1, steps=100)
        assert abs(x[0]) < 0.1
        assert x[0] == pytest.approx(expected, abs=1e-12)

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            state = AdamState(learning_rate=0.05)
            params = np.linspace(-1, 1, 7)
            for g in (np.sin(np.arange(7.0)), np.cos(np.arange(7.0))):
                params = adam_step(state, params, g)
            runs.append(params)
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_step_count_increments(self):
        state = AdamState(learning_rate=0.1)
        params = np.zeros(2)
        for expected in (1, 2, 3):
            params = adam_step(state, params, np.ones(2))
            assert state.step_count == expected

    def test_nan_gradient_names_group(self):
        state = AdamState(learning_rate=0.1, name="positions")
        with pytest.raises(ValueError, match="positions"):
            adam_step(state, np.zeros(2), np.array([np.nan, 0.0]))

    def test_shape_mismatch(self):
        state = AdamState(learning_rate=0.1)
        with pytest.raises(ValueError):
            adam_step(state, np.zeros(2), np.zeros(3))
