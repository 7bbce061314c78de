"""Adam optimizer with bias correction, one state per parameter group."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Moment estimates and step count for one parameter group.

    Moments are zero-initialized on the first update to match the parameter
    shape; ``step_count`` increases by exactly one per update.
    """

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    name: str = "params"
    first_moment: np.ndarray | None = field(default=None, repr=False)
    second_moment: np.ndarray | None = field(default=None, repr=False)
    step_count: int = 0


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Apply one Adam update and return the new parameter array.

    Raises
    ------
    ValueError
        If shapes disagree or the gradient contains NaN (the message names
        the parameter group so training aborts point at the culprit).
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(
            f"parameter group '{state.name}': params shape {params.shape} "
            f"!= grads shape {grads.shape}"
        )
    if np.any(np.isnan(grads)):
        raise ValueError(f"NaN gradient in parameter group '{state.name}'")

    if state.first_moment is None:
        state.first_moment = np.zeros_like(params)
        state.second_moment = np.zeros_like(params)
    elif state.first_moment.shape != params.shape:
        raise ValueError(
            f"parameter group '{state.name}': moment shape {state.first_moment.shape} "
            f"!= params shape {params.shape}"
        )

    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads**2
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
