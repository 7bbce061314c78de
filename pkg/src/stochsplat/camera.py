"""Cameras on a scene-enclosing sphere and pinhole ray generation.

A camera is parameterized by (latitude, longitude, radius) around a fixed
look-at point; these three coordinates are the differentiable planning
variables. The view frame follows the usual pinhole convention: camera x
points right in the image, y points down, z points forward, and a point at
camera-space position t projects to pixel (f * t_x / t_z + c_x,
f * t_y / t_z + c_y) with the principal point at the pixel-grid center.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class Camera:
    latitude: float  # radians
    longitude: float  # radians
    radius: float  # scene units, > 0
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up_hint: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    focal_length: float = 60.0  # pixels
    width: int = 64
    height: int = 64

    def __post_init__(self):
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up_hint = np.asarray(self.up_hint, dtype=np.float64)
        if self.radius <= 0:
            raise ValueError(f"camera radius must be positive, got {self.radius}")

    @property
    def position(self) -> np.ndarray:
        return self.look_at + self.radius * sphere_direction(self.latitude, self.longitude)

    @property
    def principal_point(self) -> tuple[float, float]:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def with_angles(self, latitude: float, longitude: float, radius=None) -> "Camera":
        return replace(
            self,
            latitude=float(latitude),
            longitude=float(longitude),
            radius=float(self.radius if radius is None else radius),
        )


def sphere_direction(latitude: float, longitude: float) -> np.ndarray:
    return np.array(
        [
            np.cos(latitude) * np.cos(longitude),
            np.cos(latitude) * np.sin(longitude),
            np.sin(latitude),
        ]
    )


def camera_basis(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Camera position and world-to-camera rotation (rows right, down, forward)."""
    n = sphere_direction(camera.latitude, camera.longitude)
    position = camera.look_at + camera.radius * n
    forward = -n  # unit by construction
    v = np.cross(forward, camera.up_hint)
    v_norm = np.linalg.norm(v)
    if v_norm < 1e-9:
        raise ValueError("camera looks along the up hint: view frame is degenerate")
    right = v / v_norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return position, rotation


def camera_basis_backward(
    camera: Camera, d_position: np.ndarray, d_rotation: np.ndarray
) -> tuple[float, float, float]:
    """Chain gradients on (position, rotation) back to (lat, lon, radius).

    Reverses the look-at construction of :func:`camera_basis`; the cross
    product rule used throughout is d(a x b)/da adjoint = b x upstream.
    """
    n = sphere_direction(camera.latitude, camera.longitude)
    forward = -n
    v = np.cross(forward, camera.up_hint)
    v_norm = np.linalg.norm(v)
    right = v / v_norm

    d_right = d_rotation[0].copy()
    d_down = d_rotation[1]
    d_forward = d_rotation[2].copy()
    # down = forward x right
    d_forward += np.cross(right, d_down)
    d_right += np.cross(d_down, forward)
    # right = v / |v|
    d_v = (d_right - np.dot(d_right, right) * right) / v_norm
    # v = forward x up_hint
    d_forward += np.cross(camera.up_hint, d_v)

    d_n = -d_forward + camera.radius * d_position  # position = look_at + r n
    d_radius = float(np.dot(n, d_position))
    lat, lon = camera.latitude, camera.longitude
    dn_dlat = np.array(
        [-np.sin(lat) * np.cos(lon), -np.sin(lat) * np.sin(lon), np.cos(lat)]
    )
    dn_dlon = np.array([-np.cos(lat) * np.sin(lon), np.cos(lat) * np.cos(lon), 0.0])
    return float(np.dot(d_n, dn_dlat)), float(np.dot(d_n, dn_dlon)), d_radius


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        if self.t_near >= self.t_far:
            raise ValueError("ray needs t_near < t_far")


@dataclass
class RayBundle:
    """One pinhole ray per pixel; directions are unit length."""

    origins: np.ndarray  # (H, W, 3)
    directions: np.ndarray  # (H, W, 3)
    t_near: float
    t_far: float

    def ray(self, row: int, col: int) -> Ray:
        return Ray(
            origin=self.origins[row, col].copy(),
            direction=self.directions[row, col].copy(),
            t_near=self.t_near,
            t_far=self.t_far,
        )


def generate_rays(camera: Camera, t_near: float = 0.1, t_far: float = 100.0) -> RayBundle:
    """Rays through every pixel center."""
    if t_near >= t_far:
        raise ValueError("t_near must be below t_far")
    position, rotation = camera_basis(camera)
    cx, cy = camera.principal_point
    cols, rows = np.meshgrid(np.arange(camera.width), np.arange(camera.height))
    dirs_cam = np.stack(
        [
            (cols - cx) / camera.focal_length,
            (rows - cy) / camera.focal_length,
            np.ones_like(cols, dtype=np.float64),
        ],
        axis=-1,
    )
    dirs_world = dirs_cam @ rotation  # row vectors times R == R^T applied
    dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(position, dirs_world.shape).copy()
    return RayBundle(origins=origins, directions=dirs_world, t_near=t_near, t_far=t_far)
