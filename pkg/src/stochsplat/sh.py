"""Real spherical harmonics for the first four bands (16 coefficients).

Band-major order, Condon-Shortley-free real basis as commonly tabulated:
index 0 is the constant band, indices 1..3 the linear band (y, z, x), and
so on through the cubic band. ``sh_basis_grad`` returns the derivatives of
the implemented polynomials with respect to the input direction, which is
what the renderer's backward pass chains with the normalization Jacobian.
"""

from __future__ import annotations

import warnings

import numpy as np

# Print a warning when sh_eval receives a direction that is not unit-length.
DEBUG = False

_C0 = 0.28209479177387814  # 0.5 * sqrt(1/pi)
_C1 = 0.4886025119029199  # sqrt(3 / (4 pi))
_C2a = 1.0925484305920792  # 0.5 * sqrt(15/pi)
_C2b = 0.31539156525252005  # 0.25 * sqrt(5/pi)
_C2c = 0.5462742152960396  # 0.25 * sqrt(15/pi)
_C3a = 0.5900435899266435  # 0.25 * sqrt(35/(2 pi))
_C3b = 2.890611442640554  # 0.5 * sqrt(105/pi)
_C3c = 0.4570457994644658  # 0.25 * sqrt(21/(2 pi))
_C3d = 0.3731763325901154  # 0.25 * sqrt(7/pi)
_C3e = 1.445305721320277  # 0.25 * sqrt(105/pi)

BASIS_SIZE = 16


def sh_basis(directions: np.ndarray) -> np.ndarray:
    """Evaluate the 16 basis functions at unit directions.

    Parameters
    ----------
    directions : (..., 3) array of unit vectors.

    Returns
    -------
    (..., 16) array of basis values.
    """
    d = np.asarray(directions, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z

    out = np.empty(d.shape[:-1] + (BASIS_SIZE,), dtype=np.float64)
    out[..., 0] = _C0
    out[..., 1] = _C1 * y
    out[..., 2] = _C1 * z
    out[..., 3] = _C1 * x
    out[..., 4] = _C2a * x * y
    out[..., 5] = _C2a * y * z
    out[..., 6] = _C2b * (3.0 * zz - 1.0)
    out[..., 7] = _C2a * x * z
    out[..., 8] = _C2c * (xx - yy)
    out[..., 9] = _C3a * y * (3.0 * xx - yy)
    out[..., 10] = _C3b * x * y * z
    out[..., 11] = _C3c * y * (5.0 * zz - 1.0)
    out[..., 12] = _C3d * z * (5.0 * zz - 3.0)
    out[..., 13] = _C3c * x * (5.0 * zz - 1.0)
    out[..., 14] = _C3e * z * (xx - yy)
    out[..., 15] = _C3a * x * (xx - 3.0 * yy)
    return out


def sh_basis_grad(directions: np.ndarray) -> np.ndarray:
    """Derivatives of :func:`sh_basis` with respect to the direction vector.

    Returns a ``(..., 16, 3)`` array; entry ``[k, j]`` is ``dY_k / dd_j`` of
    the implemented polynomial (the caller projects out the radial part when
    the direction was produced by normalization).
    """
    d = np.asarray(directions, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    zero = np.zeros_like(x)

    g = np.zeros(d.shape[:-1] + (BASIS_SIZE, 3), dtype=np.float64)
    g[..., 1, 1] = _C1
    g[..., 2, 2] = _C1
    g[..., 3, 0] = _C1
    g[..., 4, 0] = _C2a * y
    g[..., 4, 1] = _C2a * x
    g[..., 5, 1] = _C2a * z
    g[..., 5, 2] = _C2a * y
    g[..., 6, 2] = _C2b * 6.0 * z
    g[..., 7, 0] = _C2a * z
    g[..., 7, 2] = _C2a * x
    g[..., 8, 0] = _C2c * 2.0 * x
    g[..., 8, 1] = _C2c * (-2.0 * y)
    g[..., 9, 0] = _C3a * 6.0 * x * y
    g[..., 9, 1] = _C3a * (3.0 * xx - 3.0 * yy)
    g[..., 10, 0] = _C3b * y * z
    g[..., 10, 1] = _C3b * x * z
    g[..., 10, 2] = _C3b * x * y
    g[..., 11, 1] = _C3c * (5.0 * zz - 1.0)
    g[..., 11, 2] = _C3c * 10.0 * y * z
    g[..., 12, 2] = _C3d * (15.0 * zz - 3.0)
    g[..., 13, 0] = _C3c * (5.0 * zz - 1.0)
    g[..., 13, 2] = _C3c * 10.0 * x * z
    g[..., 14, 0] = _C3e * 2.0 * x * z
    g[..., 14, 1] = _C3e * (-2.0 * y * z)
    g[..., 14, 2] = _C3e * (xx - yy)
    g[..., 15, 0] = _C3a * (3.0 * xx - 3.0 * yy)
    g[..., 15, 1] = _C3a * (-6.0 * x * y)
    del zero
    return g


def sh_eval(direction: np.ndarray) -> np.ndarray:
    """Evaluate the basis at a single direction, normalizing if needed.

    Directions farther than 1e-6 from unit length are normalized internally
    and flagged with a warning when :data:`DEBUG` is set.
    """
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {d.shape}")
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ValueError("zero direction has no spherical harmonics value")
    if abs(norm - 1.0) > 1e-6:
        if DEBUG:
            warnings.warn(f"sh_eval: non-unit direction (|d| = {norm:.8f}), normalizing")
        d = d / norm
    return sh_basis(d)
