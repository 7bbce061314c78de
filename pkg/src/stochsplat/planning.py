"""Differentiable uncertainty estimation and next-best-view planning.

The per-view uncertainty is the summed per-pixel spread of a few rendered
realizations around their mean image. Because the estimate is just a sum of
first-order-differentiable renders, it carries exact gradients with respect
to the camera sphere coordinates (and the illumination vector), so the
next view can be found either by scoring a candidate pool or by direct
gradient ascent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .adam import AdamState, adam_step
from .camera import Camera
from .generator import ManifoldGenerator, sample
from .image import false_color, write_ppm
from .renderer import render, render_backward
from .scene import ParamLayout, unflatten
from .sobol import MAX_DIMENSION, SobolStream, to_symmetric_cube

# Keep optimized cameras away from the poles, where the look-at frame
# degenerates against the default up hint.
LATITUDE_MARGIN = 0.05


@dataclass
class UncertaintyEstimate:
    """Per-pixel variance of rendered realizations and its scalar sum."""

    variance_map: np.ndarray  # (H, W), non-negative
    total: float  # sum over the map
    m_used: int
    z_samples: np.ndarray  # (M, rank)


@dataclass
class CandidatePool:
    """A fixed set of candidate cameras with a growing chosen subset."""

    cameras: list
    chosen: list = field(default_factory=list)

    def choose(self, index: int) -> None:
        if index in self.chosen:
            raise ValueError(f"candidate {index} was already chosen")
        if not 0 <= index < len(self.cameras):
            raise IndexError(index)
        self.chosen.append(index)

    def unchosen(self) -> list:
        return [i for i in range(len(self.cameras)) if i not in self.chosen]


def default_z_samples(gen: ManifoldGenerator, m: int, seed: int = 0) -> np.ndarray:
    """The shared realization coordinates for one planning round.

    Low-rank generators take the first M Sobol points; variants beyond the
    Sobol dimension cap use a seeded uniform stream.
    """
    if gen.rank <= MAX_DIMENSION:
        stream = SobolStream(gen.rank)
        return np.stack([to_symmetric_cube(stream.next()) for _ in range(m)])
    return np.random.default_rng([seed, 3]).uniform(-1.0, 1.0, size=(m, gen.rank))


def _realization_scenes(gen: ManifoldGenerator, layout: ParamLayout, z_samples: np.ndarray):
    return [unflatten(sample(gen, z), layout) for z in z_samples]


def render_uncertainty(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    camera: Camera,
    illumination=None,
    m: int = 2,
    z_samples: np.ndarray | None = None,
) -> UncertaintyEstimate:
    """Per-pixel squared deviation of M realizations around their mean image.

    The variance normalizes by M (the estimator is used relatively, so its
    bias is irrelevant); M must be at least 2 for a spread to exist.
    """
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    z_samples = np.asarray(z_samples, dtype=np.float64)
    if z_samples.shape[0] < 2:
        raise ValueError("uncertainty needs at least M = 2 realizations")
    m = z_samples.shape[0]
    images = np.stack(
        [
            render(scene, camera, illumination).color.data
            for scene in _realization_scenes(gen, layout, z_samples)
        ]
    )
    mean_image = images.mean(axis=0)
    variance_map = np.sum((images - mean_image) ** 2, axis=(0, 3)) / m
    return UncertaintyEstimate(
        variance_map=variance_map,
        total=float(variance_map.sum()),
        m_used=m,
        z_samples=z_samples,
    )


def uncertainty_with_gradients(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    camera: Camera,
    illumination=None,
    z_samples: np.ndarray | None = None,
    m: int = 2,
):
    """Uncertainty plus its gradients for (lat, lon, radius) and illumination.

    d U / d image_s = (2/M)(image_s - mean image); each realization is then
    pulled back through the renderer and the contributions accumulate.
    """
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    z_samples = np.asarray(z_samples, dtype=np.float64)
    m = z_samples.shape[0]
    if m < 2:
        raise ValueError("uncertainty needs at least M = 2 realizations")
    scenes = _realization_scenes(gen, layout, z_samples)
    outputs = [render(scene, camera, illumination, record=True) for scene in scenes]
    images = np.stack([out.color.data for out in outputs])
    mean_image = images.mean(axis=0)
    variance_map = np.sum((images - mean_image) ** 2, axis=(0, 3)) / m
    estimate = UncertaintyEstimate(
        variance_map=variance_map,
        total=float(variance_map.sum()),
        m_used=m,
        z_samples=z_samples,
    )
    d_camera = np.zeros(3)
    d_illum = None
    for scene, out, image in zip(scenes, outputs, images):
        grads = render_backward(scene, camera, (2.0 / m) * (image - mean_image), out)
        d_camera += grads.camera
        if grads.illumination is not None:
            d_illum = grads.illumination if d_illum is None else d_illum + grads.illumination
    return estimate, d_camera, d_illum


def select_next_view(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    pool: CandidatePool,
    illumination=None,
    m: int = 2,
    z_samples: np.ndarray | None = None,
) -> int:
    """Pick the unchosen candidate with the highest uncertainty.

    All candidates are scored under the same z samples so the comparison
    sees identical realizations; ties break toward the lowest index.
    """
    open_indices = pool.unchosen()
    if not open_indices:
        raise ValueError("no unchosen candidates left in the pool")
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    totals = [
        render_uncertainty(gen, layout, pool.cameras[i], illumination, z_samples=z_samples).total
        for i in open_indices
    ]
    best = open_indices[int(np.argmax(totals))]
    pool.choose(best)
    return best


def farthest_point_select(pool: CandidatePool) -> int:
    """Unchosen candidate maximizing the distance to the chosen cameras."""
    if not pool.chosen:
        raise ValueError("farthest-point selection needs at least one chosen camera")
    open_indices = pool.unchosen()
    if not open_indices:
        raise ValueError("no unchosen candidates left in the pool")
    chosen_pos = np.stack([pool.cameras[i].position for i in pool.chosen])
    scores = [
        float(np.min(np.linalg.norm(chosen_pos - pool.cameras[i].position, axis=1)))
        for i in open_indices
    ]
    best = open_indices[int(np.argmax(scores))]
    pool.choose(best)
    return best


@dataclass
class ViewOptimizationResult:
    camera: Camera
    total: float
    trajectory: list  # (lat, lon, radius, U) per step, including the start


def _ascend_view(
    gen, layout, camera, steps, learning_rate, z_samples, optimize_radius, illumination
):
    n_params = 3 if optimize_radius else 2
    adam = AdamState(learning_rate=learning_rate, name="camera")
    params = np.array([camera.latitude, camera.longitude, camera.radius])[:n_params]
    current = camera
    best_camera, best_total = camera, -np.inf
    trajectory = []
    lat_cap = np.pi / 2 - LATITUDE_MARGIN
    for _ in range(steps):
        estimate, d_camera, _ = uncertainty_with_gradients(
            gen, layout, current, illumination, z_samples=z_samples
        )
        trajectory.append((current.latitude, current.longitude, current.radius, estimate.total))
        if estimate.total > best_total:
            best_camera, best_total = current, estimate.total
        if not np.all(np.isfinite(d_camera)):
            warnings.warn("non-finite camera gradient; returning best camera so far")
            break
        params = adam_step(adam, params, -d_camera[:n_params])  # ascent
        params[0] = np.clip(params[0], -lat_cap, lat_cap)
        current = camera.with_angles(
            params[0], params[1], params[2] if optimize_radius else None
        )
    final_estimate = render_uncertainty(gen, layout, current, illumination, z_samples=z_samples)
    trajectory.append((current.latitude, current.longitude, current.radius, final_estimate.total))
    if final_estimate.total > best_total:
        best_camera, best_total = current, final_estimate.total
    return best_camera, best_total, trajectory


def optimize_next_view(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    camera: Camera,
    steps: int = 100,
    learning_rate: float = 0.05,
    m: int = 2,
    z_samples: np.ndarray | None = None,
    optimize_radius: bool = False,
    illumination=None,
    restarts: int = 8,
    restart_seed: int = 0,
) -> ViewOptimizationResult:
    """Gradient-ascend the uncertainty over (lat, lon), radius optional.

    Desk-scale uncertainty landscapes can carry narrow dominant peaks, so
    the ascent restarts from ``restarts - 1`` additional seeded random
    views besides the given camera and keeps the overall best. Returns the
    best camera seen along any trajectory rather than the final iterate; a
    NaN gradient stops the affected ascent with a warning and the best so
    far stands.
    """
    if steps < 1:
        raise ValueError("need at least one optimization step")
    if restarts < 1:
        raise ValueError("need at least one start")
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    rng = np.random.default_rng([restart_seed, 4])
    lat_cap = np.pi / 2 - LATITUDE_MARGIN
    best_camera, best_total = camera, -np.inf
    trajectory = []
    for r in range(restarts):
        start = camera
        if r:
            start = camera.with_angles(
                rng.uniform(-lat_cap, lat_cap), rng.uniform(0.0, 2.0 * np.pi)
            )
        cam_r, total_r, traj_r = _ascend_view(
            gen, layout, start, steps, learning_rate, z_samples, optimize_radius, illumination
        )
        trajectory.extend(traj_r)
        if total_r > best_total:
            best_camera, best_total = cam_r, total_r
    return ViewOptimizationResult(camera=best_camera, total=best_total, trajectory=trajectory)


def uncertainty_landscape(
    gen: ManifoldGenerator,
    layout: ParamLayout,
    camera_template: Camera,
    lat_count: int = 16,
    lon_count: int = 32,
    m: int = 2,
    z_samples: np.ndarray | None = None,
    illumination=None,
    share_z: bool = True,
    z_seed: int = 0,
):
    """Uncertainty over a latitude-longitude grid of cameras.

    Grid cameras sit at cell centers (poles excluded). By default the same
    z samples are used in every cell so the map shows spatial rather than
    sampling variation; ``share_z=False`` instead draws fresh (seeded)
    samples per cell, exposing the estimator variance a planner querying
    each view independently would see. Returns (latitudes, longitudes,
    U map).
    """
    if lat_count < 8 or lon_count < 16:
        raise ValueError("landscape grid must be at least 8 x 16")
    if z_samples is None:
        z_samples = default_z_samples(gen, m)
    cell_rng = np.random.default_rng([z_seed, 5])
    lats = -np.pi / 2 + (np.arange(lat_count) + 0.5) * (np.pi / lat_count)
    lons = -np.pi + (np.arange(lon_count) + 0.5) * (2.0 * np.pi / lon_count)
    grid = np.zeros((lat_count, lon_count))
    for i, lat in enumerate(lats):
        for j, lon in enumerate(lons):
            cam = camera_template.with_angles(lat, lon)
            cell_z = z_samples if share_z else cell_rng.uniform(-1.0, 1.0, size=(m, gen.rank))
            grid[i, j] = render_uncertainty(
                gen, layout, cam, illumination, z_samples=cell_z
            ).total
    return lats, lons, grid


def write_landscape_csv(path, lats, lons, grid) -> None:
    with open(path, "w") as fh:
        fh.write("lat,lon,U\n")
        for i, lat in enumerate(lats):
            for j, lon in enumerate(lons):
                fh.write(f"{float(lat)!r},{float(lon)!r},{float(grid[i, j])!r}\n")


def write_landscape_ppm(path, grid) -> None:
    write_ppm(false_color(grid), path)


def landscape_smoothness(grid: np.ndarray) -> float:
    """Mean absolute adjacent-cell difference, normalized by the map mean.

    Longitude wraps around; latitude does not.
    """
    grid = np.asarray(grid, dtype=np.float64)
    mean = grid.mean()
    if mean == 0.0:
        return 0.0
    d_lon = np.abs(grid - np.roll(grid, 1, axis=1))
    d_lat = np.abs(np.diff(grid, axis=0))
    return float((d_lon.sum() + d_lat.sum()) / (d_lon.size + d_lat.size) / mean)
