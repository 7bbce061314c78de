"""Procedural ground-truth scenes and camera rigs for closed-loop experiments.

Ground truth is itself a Gaussian scene rendered by the same renderer, so a
planning policy can "capture" any camera or light on demand and evaluation
has exact targets (and exact depth) without external data.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logit

from .camera import Camera
from .planning import CandidatePool
from .renderer import render
from .scene import APPEARANCE_SH, APPEARANCE_TRANSFER, Scene
from .sh import sh_basis
from .training import TrainingSample

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def fibonacci_sphere_cameras(
    count: int,
    radius: float,
    width: int = 64,
    height: int = 64,
    focal: float | None = None,
    offset: float = 0.0,
    look_at=(0.0, 0.0, 0.0),
) -> list[Camera]:
    """Near-uniform cameras on the sphere; ``offset`` interleaves two rigs.

    Latitudes are pulled in slightly from the poles so the default up hint
    never degenerates.
    """
    cameras = []
    focal = 0.9 * width if focal is None else focal
    for i in range(count):
        frac = (i + 0.5 + offset) / count
        lat = np.arcsin(np.clip(1.0 - 2.0 * frac, -0.995, 0.995))
        lon = ((i + offset) * GOLDEN_ANGLE) % (2.0 * np.pi)
        cameras.append(
            Camera(
                latitude=float(lat),
                longitude=float(lon),
                radius=radius,
                look_at=np.asarray(look_at, dtype=np.float64),
                focal_length=focal,
                width=width,
                height=height,
            )
        )
    return cameras


def _uniform_in_ball(rng, n, radius):
    directions = rng.normal(size=(n, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / 3.0)
    return directions * radii


def _random_sh_colors(rng, n):
    dc = sh_basis(np.array([1.0, 0.0, 0.0]))[0]
    appearance = np.zeros((n, 3, 16))
    appearance[:, :, 0] = rng.uniform(0.25, 0.9, size=(n, 3)) / dc
    appearance[:, :, 1:4] = rng.uniform(-0.25, 0.25, size=(n, 3, 3))
    appearance[:, :, 4:9] = rng.uniform(-0.12, 0.12, size=(n, 3, 5))
    appearance[:, :, 9:] = rng.uniform(-0.06, 0.06, size=(n, 3, 7))
    return appearance


def generate_scene(
    seed: int,
    n_primitives: int,
    extent: float = 0.8,
    mode: str = APPEARANCE_SH,
    pool_size: int = 20,
    n_test: int = 12,
    pool_radius: float | None = None,
    width: int = 64,
    height: int = 64,
    background=(0.05, 0.05, 0.08),
):
    """A random ground-truth scene plus candidate pool and test cameras.

    Primitive covariances keep their condition number below 20 (per-axis
    log-scale offsets within +-0.6 of a common base); test cameras are a
    second Fibonacci rig interleaved between the pool positions.
    """
    if n_primitives < 1:
        raise ValueError("need at least one primitive")
    rng = np.random.default_rng(seed)
    # A mostly-opaque shell inside the ball: like real objects, any single
    # view sees only the near side, so unvisited hemispheres stay genuinely
    # ambiguous and view planning has something to gain.
    directions = rng.normal(size=(n_primitives, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    positions = directions * (extent * rng.uniform(0.8, 1.0, size=(n_primitives, 1)))
    base = np.log(extent * rng.uniform(0.12, 0.2, size=(n_primitives, 1)))
    log_scales = base + rng.uniform(-0.5, 0.5, size=(n_primitives, 3))
    rotations = rng.normal(size=(n_primitives, 4))
    opacity_logits = rng.uniform(logit(0.7), logit(0.97), size=n_primitives)
    if mode == APPEARANCE_SH:
        appearance = _random_sh_colors(rng, n_primitives)
    elif mode == APPEARANCE_TRANSFER:
        # Column 0 carries the ambient response (so uniform light reproduces
        # an SH-colored scene); a positive diagonal plus an ambient coupling
        # row keep renders well-exposed under arbitrary unit-energy lights,
        # with small dense cross terms on top.
        appearance = rng.uniform(-0.12, 0.12, size=(n_primitives, 3, 16, 16))
        appearance[..., 0] = _random_sh_colors(rng, n_primitives)
        diag = np.arange(1, 16)
        appearance[:, :, diag, diag] = rng.uniform(0.15, 0.45, size=(n_primitives, 3, 15))
        appearance[:, :, 0, 1:] = rng.uniform(0.0, 0.25, size=(n_primitives, 3, 15))
    else:
        raise ValueError(f"unknown appearance mode {mode!r}")
    scene = Scene(
        positions=positions,
        log_scales=log_scales,
        rotations=rotations,
        opacity_logits=opacity_logits,
        appearance=appearance,
        background=np.asarray(background, dtype=np.float64),
        mode=mode,
    )
    pool_radius = 4.0 * extent if pool_radius is None else pool_radius
    pool = CandidatePool(
        cameras=fibonacci_sphere_cameras(pool_size, pool_radius, width, height)
    )
    test_cameras = fibonacci_sphere_cameras(
        n_test, pool_radius, width, height, offset=0.37
    )
    return scene, pool, test_cameras


def synthesize_dataset(gt_scene: Scene, cameras, lights=None) -> list[TrainingSample]:
    """Render supervision targets for every (camera, light) combination.

    SH-mode scenes ignore ``lights`` (one sample per camera with
    ``illumination_index`` None); transfer-mode scenes require them.
    """
    samples = []
    if gt_scene.mode == APPEARANCE_TRANSFER:
        if not lights:
            raise ValueError("transfer-mode datasets need illumination conditions")
        for ci, cam in enumerate(cameras):
            for li, light in enumerate(lights):
                target = render(gt_scene, cam, light).color.data
                samples.append(TrainingSample(camera_index=ci, illumination_index=li, target=target))
    else:
        for ci, cam in enumerate(cameras):
            target = render(gt_scene, cam).color.data
            samples.append(TrainingSample(camera_index=ci, illumination_index=None, target=target))
    return samples


def render_depth(gt_scene: Scene, camera: Camera, illumination=None) -> np.ndarray:
    """Alpha-composited expected depth of the ground truth (for AUSE)."""
    return render(gt_scene, camera, illumination).depth


def init_fit_scene(
    seed: int,
    n_primitives: int,
    extent: float = 0.8,
    mode: str = APPEARANCE_SH,
    background=(0.05, 0.05, 0.08),
) -> Scene:
    """The starting model: a random point cloud of small gray Gaussians."""
    rng = np.random.default_rng([seed, 7])
    dc = sh_basis(np.array([1.0, 0.0, 0.0]))[0]
    if mode == APPEARANCE_SH:
        appearance = np.zeros((n_primitives, 3, 16))
        appearance[:, :, 0] = 0.5 / dc
    else:
        appearance = np.zeros((n_primitives, 3, 16, 16))
        appearance[:, :, 0, 0] = 0.5 / dc
    return Scene(
        positions=_uniform_in_ball(rng, n_primitives, extent),
        log_scales=np.full((n_primitives, 3), np.log(0.18 * extent)),
        rotations=np.concatenate(
            [np.ones((n_primitives, 1)), 0.1 * rng.normal(size=(n_primitives, 3))], axis=1
        ),
        opacity_logits=np.full(n_primitives, logit(0.15)),
        appearance=appearance,
        background=np.asarray(background, dtype=np.float64),
        mode=mode,
    )
