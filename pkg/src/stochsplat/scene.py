"""Gaussian primitives, the flat trainable vector, and raw-to-world activation.

All trainable quantities are stored raw (log scales, opacity logits,
unnormalized quaternions) so that additive perturbations of the flat vector
always activate to a valid scene. Flatten/unflatten is an exact bijection:
primitives in index order, fields in declaration order
(position, log_scale, rotation, opacity_logit, appearance).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import expit

APPEARANCE_SH = "sh"
APPEARANCE_TRANSFER = "transfer"

SH_COEFFS = 16
_APPEARANCE_SIZE = {APPEARANCE_SH: 3 * SH_COEFFS, APPEARANCE_TRANSFER: 3 * SH_COEFFS * SH_COEFFS}

# (name, offset within a primitive block, length); appearance length depends
# on the mode and is appended dynamically.
_FIXED_FIELDS = (
    ("position", 0, 3),
    ("log_scale", 3, 3),
    ("rotation", 6, 4),
    ("opacity_logit", 10, 1),
)
APPEARANCE_OFFSET = 11

SCENE_FORMAT_VERSION = 1


@dataclass
class GaussianPrimitive:
    """One anisotropic Gaussian: raw geometry plus appearance coefficients.

    ``appearance`` is ``(3, 16)`` view-dependent color coefficients in SH
    mode or a ``(3, 16, 16)`` per-channel radiance transfer matrix.
    """

    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    appearance: np.ndarray


@dataclass(frozen=True)
class ParamLayout:
    """Field offsets of the flat parameter vector for a fixed scene shape.

    Carries the (non-trainable) background color so a Scene can be rebuilt
    from the vector alone.
    """

    n_primitives: int
    appearance_mode: str
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def appearance_size(self) -> int:
        return _APPEARANCE_SIZE[self.appearance_mode]

    @property
    def block_size(self) -> int:
        return APPEARANCE_OFFSET + self.appearance_size

    @property
    def total_dimension(self) -> int:
        return self.n_primitives * self.block_size

    def fields(self) -> tuple[tuple[str, int, int], ...]:
        return _FIXED_FIELDS + (("appearance", APPEARANCE_OFFSET, self.appearance_size),)

    def field_slice(self, primitive_index: int, field_name: str) -> slice:
        base = primitive_index * self.block_size
        for name, offset, length in self.fields():
            if name == field_name:
                return slice(base + offset, base + offset + length)
        raise KeyError(field_name)

    def field_indices(self, field_name: str) -> np.ndarray:
        """Flat indices of one field across all primitives (for optimizer groups)."""
        for name, offset, length in self.fields():
            if name == field_name:
                starts = np.arange(self.n_primitives) * self.block_size + offset
                return (starts[:, None] + np.arange(length)[None, :]).ravel()
        raise KeyError(field_name)

    def block_ranges(self) -> list[tuple[int, int]]:
        """(start, length) of every per-primitive field block, in order."""
        ranges = []
        for i in range(self.n_primitives):
            base = i * self.block_size
            for _, offset, length in self.fields():
                ranges.append((base + offset, length))
        return ranges


@dataclass
class Scene:
    """A set of Gaussian primitives plus a background color.

    Stored as per-field arrays (struct-of-arrays) for vectorized activation
    and rendering; ``primitive(i)`` and ``primitives()`` give the per-entry
    view.
    """

    positions: np.ndarray  # (N, 3)
    log_scales: np.ndarray  # (N, 3)
    rotations: np.ndarray  # (N, 4) unnormalized quaternions (w, x, y, z)
    opacity_logits: np.ndarray  # (N,)
    appearance: np.ndarray  # (N, 3, 16) or (N, 3, 16, 16)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mode: str = APPEARANCE_SH

    def __post_init__(self):
        for name in ("positions", "log_scales", "rotations", "opacity_logits", "appearance"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.background = np.asarray(self.background, dtype=np.float64)
        n = self.positions.shape[0]
        if n == 0:
            raise ValueError("a scene needs at least one primitive")
        expected = (n, 3, SH_COEFFS) if self.mode == APPEARANCE_SH else (n, 3, SH_COEFFS, SH_COEFFS)
        if self.mode not in _APPEARANCE_SIZE:
            raise ValueError(f"unknown appearance mode {self.mode!r}")
        if self.appearance.shape != expected:
            raise ValueError(
                f"appearance shape {self.appearance.shape} does not match mode "
                f"{self.mode!r} (expected {expected})"
            )
        if self.background.shape != (3,) or not np.all(np.isfinite(self.background)):
            raise ValueError("background must be a finite RGB triple")

    @property
    def n_primitives(self) -> int:
        return self.positions.shape[0]

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.positions[i].copy(),
            log_scale=self.log_scales[i].copy(),
            rotation=self.rotations[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            appearance=self.appearance[i].copy(),
        )

    def primitives(self) -> Iterator[GaussianPrimitive]:
        return (self.primitive(i) for i in range(self.n_primitives))

    @classmethod
    def from_primitives(cls, prims, background=(0.0, 0.0, 0.0), mode=APPEARANCE_SH) -> "Scene":
        return cls(
            positions=np.array([p.position for p in prims], dtype=np.float64),
            log_scales=np.array([p.log_scale for p in prims], dtype=np.float64),
            rotations=np.array([p.rotation for p in prims], dtype=np.float64),
            opacity_logits=np.array([p.opacity_logit for p in prims], dtype=np.float64),
            appearance=np.array([p.appearance for p in prims], dtype=np.float64),
            background=np.asarray(background, dtype=np.float64),
            mode=mode,
        )

    def copy(self) -> "Scene":
        return Scene(
            positions=self.positions.copy(),
            log_scales=self.log_scales.copy(),
            rotations=self.rotations.copy(),
            opacity_logits=self.opacity_logits.copy(),
            appearance=self.appearance.copy(),
            background=self.background.copy(),
            mode=self.mode,
        )


def flatten(scene: Scene) -> tuple[np.ndarray, ParamLayout]:
    """Pack a scene into the flat trainable vector plus its layout."""
    n = scene.n_primitives
    blocks = np.concatenate(
        [
            scene.positions,
            scene.log_scales,
            scene.rotations,
            scene.opacity_logits[:, None],
            scene.appearance.reshape(n, -1),
        ],
        axis=1,
    )
    layout = ParamLayout(
        n_primitives=n,
        appearance_mode=scene.mode,
        background=tuple(float(c) for c in scene.background),
    )
    return blocks.ravel(), layout


def unflatten(theta: np.ndarray, layout: ParamLayout) -> Scene:
    """Inverse of :func:`flatten`."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (layout.total_dimension,):
        raise ValueError(
            f"parameter vector has length {theta.shape}, layout expects "
            f"({layout.total_dimension},)"
        )
    n = layout.n_primitives
    blocks = theta.reshape(n, layout.block_size)
    appearance = blocks[:, APPEARANCE_OFFSET:]
    if layout.appearance_mode == APPEARANCE_SH:
        appearance = appearance.reshape(n, 3, SH_COEFFS)
    else:
        appearance = appearance.reshape(n, 3, SH_COEFFS, SH_COEFFS)
    return Scene(
        positions=blocks[:, 0:3].copy(),
        log_scales=blocks[:, 3:6].copy(),
        rotations=blocks[:, 6:10].copy(),
        opacity_logits=blocks[:, 10].copy(),
        appearance=appearance.copy(),
        background=np.array(layout.background),
        mode=layout.appearance_mode,
    )


# ---------------------------------------------------------------------------
# Activation: raw fields -> world-space quantities
# ---------------------------------------------------------------------------


def normalize_quaternions(rotations: np.ndarray) -> np.ndarray:
    q = np.asarray(rotations, dtype=np.float64)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("zero quaternion: degenerate rotation")
    return q / norms


def quat_to_rotmat(q_unit: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) to rotation matrices, batched."""
    w, x, y, z = q_unit[..., 0], q_unit[..., 1], q_unit[..., 2], q_unit[..., 3]
    rot = np.empty(q_unit.shape[:-1] + (3, 3), dtype=np.float64)
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


@dataclass
class ActivatedScene:
    """World-space quantities derived from the raw fields."""

    scales: np.ndarray  # (N, 3) exp(log_scale)
    rotations_unit: np.ndarray  # (N, 4)
    rot_mats: np.ndarray  # (N, 3, 3)
    covariances: np.ndarray  # (N, 3, 3) symmetric positive definite
    opacities: np.ndarray  # (N,) in (0, 1)


def activate(scene: Scene) -> ActivatedScene:
    """Activate every primitive: covariance R diag(exp ls)^2 R^T, logistic opacity."""
    scales = np.exp(scene.log_scales)
    q_unit = normalize_quaternions(scene.rotations)
    rot = quat_to_rotmat(q_unit)
    # R * diag(s^2) applied columnwise, then times R^T.
    rd = rot * (scales**2)[:, None, :]
    covariances = rd @ np.swapaxes(rot, 1, 2)
    opacities = expit(scene.opacity_logits)
    return ActivatedScene(
        scales=scales,
        rotations_unit=q_unit,
        rot_mats=rot,
        covariances=covariances,
        opacities=opacities,
    )


def activate_primitive(prim: GaussianPrimitive) -> tuple[np.ndarray, float, np.ndarray]:
    """World-space fields of one primitive: (covariance, opacity, unit rotation)."""
    scene = Scene(
        positions=prim.position[None],
        log_scales=prim.log_scale[None],
        rotations=prim.rotation[None],
        opacity_logits=np.array([prim.opacity_logit]),
        appearance=prim.appearance[None],
        mode=APPEARANCE_SH if prim.appearance.ndim == 2 else APPEARANCE_TRANSFER,
    )
    act = activate(scene)
    return act.covariances[0], float(act.opacities[0]), act.rotations_unit[0]


# ---------------------------------------------------------------------------
# Activation backward (consumed by the renderer's reverse pass)
# ---------------------------------------------------------------------------


def covariance_backward(act: ActivatedScene, d_cov: np.ndarray):
    """Gradients of Sigma = R diag(s^2) R^T.

    ``d_cov`` is (N, 3, 3); returns ``(d_log_scale (N, 3), d_rotmat (N, 3, 3))``.
    """
    rot = act.rot_mats
    s2 = act.scales**2
    rd = rot * s2[:, None, :]
    d_rot = d_cov @ rd + np.swapaxes(d_cov, 1, 2) @ rd
    rt_g_r = np.einsum("nki,nkl,nlj->nij", rot, d_cov, rot)
    d_diag = np.einsum("nii->ni", rt_g_r)
    d_log_scale = d_diag * 2.0 * s2  # d(exp(2 ls))/d ls = 2 exp(2 ls)
    return d_log_scale, d_rot


def rotmat_quat_backward(q_unit: np.ndarray, d_rot: np.ndarray) -> np.ndarray:
    """Chain (N, 3, 3) rotation-matrix gradients back to unit quaternions."""
    w, x, y, z = q_unit[..., 0], q_unit[..., 1], q_unit[..., 2], q_unit[..., 3]
    g = d_rot
    dw = 2.0 * (
        -z * g[..., 0, 1]
        + y * g[..., 0, 2]
        + z * g[..., 1, 0]
        - x * g[..., 1, 2]
        - y * g[..., 2, 0]
        + x * g[..., 2, 1]
    )
    dx = 2.0 * (
        y * g[..., 0, 1]
        + z * g[..., 0, 2]
        + y * g[..., 1, 0]
        - 2 * x * g[..., 1, 1]
        - w * g[..., 1, 2]
        + z * g[..., 2, 0]
        + w * g[..., 2, 1]
        - 2 * x * g[..., 2, 2]
    )
    dy = 2.0 * (
        -2 * y * g[..., 0, 0]
        + x * g[..., 0, 1]
        + w * g[..., 0, 2]
        + x * g[..., 1, 0]
        + z * g[..., 1, 2]
        - w * g[..., 2, 0]
        + z * g[..., 2, 1]
        - 2 * y * g[..., 2, 2]
    )
    dz = 2.0 * (
        -2 * z * g[..., 0, 0]
        - w * g[..., 0, 1]
        + x * g[..., 0, 2]
        + w * g[..., 1, 0]
        - 2 * z * g[..., 1, 1]
        + y * g[..., 1, 2]
        + x * g[..., 2, 0]
        + y * g[..., 2, 1]
    )
    return np.stack([dw, dx, dy, dz], axis=-1)


def quat_normalize_backward(rotations_raw: np.ndarray, d_q_unit: np.ndarray) -> np.ndarray:
    """Backward through q_unit = q / |q|: project out the radial component."""
    q = np.asarray(rotations_raw, dtype=np.float64)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    q_unit = q / norms
    radial = np.sum(d_q_unit * q_unit, axis=-1, keepdims=True)
    return (d_q_unit - radial * q_unit) / norms


def opacity_backward(opacities: np.ndarray, d_opacity: np.ndarray) -> np.ndarray:
    """Backward through the logistic activation."""
    return d_opacity * opacities * (1.0 - opacities)


# ---------------------------------------------------------------------------
# Densification
# ---------------------------------------------------------------------------


def densify_scene(
    scene: Scene,
    positional_grad_norms: np.ndarray,
    grad_threshold: float,
    scale_threshold: float,
    split_factor: float = 1.6,
) -> tuple[Scene, np.ndarray]:
    """Clone small over-threshold primitives, split large ones.

    Returns the enlarged scene and a parent-index array mapping each new
    primitive to the primitive it came from (survivors map to themselves and
    keep their values bit for bit). Split children shrink their log scales
    by log(split_factor); clone children are exact copies.
    """
    norms = np.asarray(positional_grad_norms, dtype=np.float64)
    if norms.shape != (scene.n_primitives,):
        raise ValueError("one gradient norm per primitive required")
    over = norms > grad_threshold
    max_scale = np.exp(scene.log_scales).max(axis=1)
    split = over & (max_scale > scale_threshold)
    clone = over & ~split

    keep = ~split  # split parents are replaced by their children
    parents = [np.flatnonzero(keep)]
    adjust_scale = [np.zeros(keep.sum(), dtype=bool)]
    clone_ids = np.flatnonzero(clone)
    parents.append(clone_ids)
    adjust_scale.append(np.zeros(clone_ids.size, dtype=bool))
    split_ids = np.flatnonzero(split)
    parents.append(np.repeat(split_ids, 2))
    adjust_scale.append(np.ones(2 * split_ids.size, dtype=bool))

    parent_index = np.concatenate(parents)
    adjust = np.concatenate(adjust_scale)
    log_scales = scene.log_scales[parent_index].copy()
    log_scales[adjust] -= np.log(split_factor)
    new_scene = Scene(
        positions=scene.positions[parent_index].copy(),
        log_scales=log_scales,
        rotations=scene.rotations[parent_index].copy(),
        opacity_logits=scene.opacity_logits[parent_index].copy(),
        appearance=scene.appearance[parent_index].copy(),
        background=scene.background.copy(),
        mode=scene.mode,
    )
    return new_scene, parent_index


# ---------------------------------------------------------------------------
# Scene file I/O
# ---------------------------------------------------------------------------


def save_scene(scene: Scene, path) -> None:
    payload = {
        "format_version": SCENE_FORMAT_VERSION,
        "mode": scene.mode,
        "background": scene.background.tolist(),
        "primitives": [
            {
                "position": scene.positions[i].tolist(),
                "log_scale": scene.log_scales[i].tolist(),
                "rotation": scene.rotations[i].tolist(),
                "opacity_logit": float(scene.opacity_logits[i]),
                "appearance": scene.appearance[i].tolist(),
            }
            for i in range(scene.n_primitives)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_scene(path) -> Scene:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != SCENE_FORMAT_VERSION:
        raise ValueError(f"unsupported scene format version: {version}")
    prims = payload["primitives"]
    return Scene(
        positions=[p["position"] for p in prims],
        log_scales=[p["log_scale"] for p in prims],
        rotations=[p["rotation"] for p in prims],
        opacity_logits=[p["opacity_logit"] for p in prims],
        appearance=[p["appearance"] for p in prims],
        background=payload["background"],
        mode=payload["mode"],
    )
