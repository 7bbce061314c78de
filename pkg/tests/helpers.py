"""Shared scene and camera builders for the test suite."""

import numpy as np

from stochsplat.camera import Camera
from stochsplat.scene import APPEARANCE_SH, APPEARANCE_TRANSFER, Scene
from stochsplat.sh import sh_basis


def random_scene(
    rng,
    n_primitives,
    mode=APPEARANCE_SH,
    extent=0.8,
    background=(0.1, 0.12, 0.15),
) -> Scene:
    """A generic scene with mixed opacities and mild anisotropy."""
    positions = rng.uniform(-extent, extent, size=(n_primitives, 3))
    log_scales = rng.uniform(np.log(0.08), np.log(0.3), size=(n_primitives, 3))
    rotations = rng.normal(size=(n_primitives, 4))
    opacity_logits = rng.uniform(-1.0, 2.0, size=n_primitives)
    if mode == APPEARANCE_SH:
        appearance = rng.uniform(-0.3, 0.3, size=(n_primitives, 3, 16))
        appearance[:, :, 0] = rng.uniform(0.5, 2.5, size=(n_primitives, 3))
    else:
        appearance = rng.uniform(-0.1, 0.1, size=(n_primitives, 3, 16, 16))
        appearance[:, :, :, 0] = rng.uniform(0.3, 2.0, size=(n_primitives, 3, 16))
    return Scene(
        positions=positions,
        log_scales=log_scales,
        rotations=rotations,
        opacity_logits=opacity_logits,
        appearance=appearance,
        background=np.array(background),
        mode=mode,
    )


def flat_color_sh(color) -> np.ndarray:
    """SH coefficients whose shaded color is ``color`` from every direction."""
    dc = sh_basis(np.array([1.0, 0.0, 0.0]))[0]
    coeffs = np.zeros((3, 16))
    coeffs[:, 0] = np.asarray(color) / dc
    return coeffs


def make_camera(lat=0.0, lon=0.0, radius=3.0, size=17, focal=None, **kwargs) -> Camera:
    return Camera(
        latitude=lat,
        longitude=lon,
        radius=radius,
        focal_length=focal if focal is not None else 0.9 * size,
        width=size,
        height=size,
        **kwargs,
    )


def random_unit_illumination(rng) -> np.ndarray:
    pi = rng.normal(size=16)
    pi[0] = abs(pi[0]) + 1.0  # keep the scene lit overall
    return pi / np.linalg.norm(pi)
