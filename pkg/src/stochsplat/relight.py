"""Radiance-transfer relighting and next-best-illumination planning.

Each primitive carries one 16 x 16 transfer matrix per color channel that
maps incident-light coefficients (first four bands) to outgoing-radiance
coefficients; shading evaluates the outgoing expansion toward the viewer
and clamps at zero. Light planning scores the 16 one-hot coefficient
candidates by mean uncertainty over a probe camera set, then refines the
winner by gradient ascent on the unit sphere of coefficient vectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .adam import AdamState, adam_step
from .generator import ManifoldGenerator
from .planning import default_z_samples, render_uncertainty, uncertainty_with_gradients
from .scene import ParamLayout
from .sh import sh_eval

N_LIGHT_COEFFS = 16


@dataclass
class IlluminationCondition:
    """An incident-light SH coefficient vector, optionally unit-energy."""

    coeffs: np.ndarray
    unit_energy: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (N_LIGHT_COEFFS,):
            raise ValueError(f"illumination needs {N_LIGHT_COEFFS} coefficients")
        if self.unit_energy:
            norm = np.linalg.norm(self.coeffs)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError("unit-energy illumination must have unit norm")

    def normalized(self) -> "IlluminationCondition":
        norm = np.linalg.norm(self.coeffs)
        if norm == 0.0:
            raise ValueError("cannot normalize a zero illumination")
        return IlluminationCondition(coeffs=self.coeffs / norm, unit_energy=True)


def one_hot_light(index: int) -> np.ndarray:
    if not 0 <= index < N_LIGHT_COEFFS:
        raise IndexError(index)
    pi = np.zeros(N_LIGHT_COEFFS)
    pi[index] = 1.0
    return pi


def dc_light(intensity: float = 1.0) -> np.ndarray:
    return intensity * one_hot_light(0)


def shade(transfer: np.ndarray, illumination: np.ndarray, view_direction: np.ndarray) -> np.ndarray:
    """Outgoing RGB toward the viewer: max(0, <T_c pi, Y(v)>) per channel."""
    transfer = np.asarray(transfer, dtype=np.float64)
    if transfer.shape != (3, N_LIGHT_COEFFS, N_LIGHT_COEFFS):
        raise ValueError(f"transfer must be (3, 16, 16), got {transfer.shape}")
    out_sh = transfer @ np.asarray(illumination, dtype=np.float64)
    basis = sh_eval(view_direction)
    return np.maximum(out_sh @ basis, 0.0)


def shade_backward(
    transfer: np.ndarray,
    illumination: np.ndarray,
    view_direction: np.ndarray,
    d_radiance: np.ndarray,
):
    """Exact derivatives of the bilinear shade through the zero clamp.

    Returns ``(d_transfer, d_illumination)``; clamped channels contribute
    nothing.
    """
    transfer = np.asarray(transfer, dtype=np.float64)
    illumination = np.asarray(illumination, dtype=np.float64)
    basis = sh_eval(view_direction)
    out_sh = transfer @ illumination
    live = (out_sh @ basis) > 0.0
    upstream = np.where(live, np.asarray(d_radiance, dtype=np.float64), 0.0)
    # radiance_c = basis^T T_c pi
    d_transfer = upstream[:, None, None] * np.einsum("k,j->kj", basis, illumination)
    d_illum = np.einsum("c,ckj,k->j", upstream, transfer, basis)
    return d_transfer, d_illum


# ---------------------------------------------------------------------------
# Illumination-space planning
# ---------------------------------------------------------------------------


def mean_uncertainty_over_cameras(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    cameras,
    illumination,
    z_samples,
) -> float:
    totals = [
        render_uncertainty(gen, layout, cam, illumination, z_samples=z_samples).total
        for cam in cameras
    ]
    return float(np.mean(totals))


def select_next_illumination(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    cameras,
    used_indices=(),
    m: int = 2,
    z_samples: np.ndarray | None = None,
) -> tuple[int, np.ndarray]:
    """Best one-hot light by mean uncertainty over the probe cameras.

    ``used_indices`` excludes coefficients already acquired (training always
    starts from the angularly uniform light, so index 0 is normally in it).
    Ties break toward the lowest coefficient index.
    """
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    candidates = [k for k in range(N_LIGHT_COEFFS) if k not in set(used_indices)]
    if not candidates:
        raise ValueError("all one-hot illumination candidates were used")
    scores = [
        mean_uncertainty_over_cameras(gen, layout, cameras, one_hot_light(k), z_samples)
        for k in candidates
    ]
    best = candidates[int(np.argmax(scores))]
    return best, one_hot_light(best)


@dataclass
class LightOptimizationResult:
    illumination: np.ndarray
    total: float
    trajectory: list  # (coeffs, mean U) per step


def optimize_next_illumination(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    initial: np.ndarray,
    cameras,
    steps: int = 50,
    learning_rate: float = 0.1,
    m: int = 2,
    z_samples: np.ndarray | None = None,
) -> LightOptimizationResult:
    """Ascend mean uncertainty over the probe cameras with respect to pi.

    The coefficient vector is renormalized to unit energy after every step
    (removing the trivial brightness direction); the best vector along the
    trajectory is returned.
    """
    initial = np.asarray(initial, dtype=np.float64)
    if not np.all(np.isfinite(initial)):
        raise ValueError("initial illumination must be finite")
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    pi = initial / np.linalg.norm(initial)
    adam = AdamState(learning_rate=learning_rate, name="illumination")
    best_pi, best_total = pi, -np.inf
    trajectory = []
    for _ in range(steps):
        grad = np.zeros(N_LIGHT_COEFFS)
        total = 0.0
        for cam in cameras:
            estimate, _, d_illum = uncertainty_with_gradients(
                gen, layout, cam, pi, z_samples=z_samples
            )
            total += estimate.total / len(cameras)
            grad += d_illum / len(cameras)
        trajectory.append((pi.copy(), total))
        if total > best_total:
            best_pi, best_total = pi.copy(), total
        if not np.all(np.isfinite(grad)):
            warnings.warn("non-finite illumination gradient; returning best so far")
            break
        pi = adam_step(adam, pi, -grad)  # ascent
        pi = pi / np.linalg.norm(pi)
    total = mean_uncertainty_over_cameras(gen, layout, cameras, pi, z_samples)
    trajectory.append((pi.copy(), total))
    if total > best_total:
        best_pi, best_total = pi.copy(), total
    return LightOptimizationResult(illumination=best_pi, total=best_total, trajectory=trajectory)


# ---------------------------------------------------------------------------
# Illumination library files
# ---------------------------------------------------------------------------


def save_light_library(path, named_lights) -> None:
    """CSV of named 16-vectors: ``name,c0,...,c15`` per row."""
    with open(path, "w") as fh:
        fh.write("name," + ",".join(f"c{k}" for k in range(N_LIGHT_COEFFS)) + "\n")
        for name, coeffs in named_lights:
            coeffs = np.asarray(coeffs, dtype=np.float64)
            fh.write(name + "," + ",".join(repr(float(c)) for c in coeffs) + "\n")


def load_light_library(path) -> list[tuple[str, np.ndarray]]:
    lights = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "name" or len(header) != N_LIGHT_COEFFS + 1:
            raise ValueError("not an illumination library file")
        for line in fh:
            parts = line.strip().split(",")
            lights.append((parts[0], np.array([float(x) for x in parts[1:]])))
    return lights
