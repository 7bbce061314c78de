"""Differentiable splatting renderer with a hand-derived reverse pass.

Forward: every activated primitive is projected to the image plane (mean,
2x2 footprint covariance via the local affine Jacobian of the pinhole map,
depth), shaded from its view direction, and alpha-composited front to back
over all pixels inside a 3.5-sigma footprint box. The box radius is chosen
so it never excludes anything the 1/255 minimum-contribution cutoff would
keep; together with the 0.99 alpha clamp this makes the forward a piecewise
smooth function whose exact derivative the backward pass computes.

Compositing is evaluated over a flat list of (primitive, pixel) pairs
sorted by (pixel, depth, primitive index): transmittances become segmented
cumulative sums of log(1 - alpha) and all per-pixel and per-primitive
reductions become bincount scatters, so no Python-level loop touches
pixels. The backward pass walks the same pair list in suffix form.

Backward: per-pixel color gradients are pulled back through compositing,
the Gaussian footprint, projection, shading, and raw-parameter activation,
producing gradients for the full flat parameter vector, the camera sphere
coordinates (lat, lon, radius), and the illumination coefficients in
transfer mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, camera_basis, camera_basis_backward
from .image import ImageBuffer
from .scene import (
    APPEARANCE_SH,
    ActivatedScene,
    Scene,
    activate,
    covariance_backward,
    opacity_backward,
    quat_normalize_backward,
    rotmat_quat_backward,
)
from .sh import sh_basis, sh_basis_grad

ALPHA_LIMIT = 0.99
ALPHA_CUTOFF = 1.0 / 255.0
# exp(-3.5^2 / 2) ~= 0.0022 < 1/255, so the box cutoff is strictly inside
# the alpha cutoff for any opacity below 1.
FOOTPRINT_SIGMA = 3.5
COV2D_DILATION = 0.3  # pixels^2, numerical guard on the footprint
MAX_CONDITION = 1e12
NEAR_PLANE = 0.05


@dataclass
class RenderOutput:
    """Composited color plus per-pixel alpha and expected depth."""

    color: ImageBuffer
    alpha: np.ndarray  # (H, W) accumulated opacity in [0, 1]
    depth: np.ndarray  # (H, W) alpha-weighted expected depth
    records: "RenderRecords | None"
    diagnostics: dict


@dataclass
class RenderRecords:
    """Intermediates kept by the forward pass for the backward pass."""

    camera_position: np.ndarray
    camera_rotation: np.ndarray
    act: ActivatedScene
    rel: np.ndarray  # (N, 3) position - camera position
    t_cam: np.ndarray  # (N, 3)
    mean2d: np.ndarray  # (N, 2)
    jac: np.ndarray  # (N, 2, 3)
    proj: np.ndarray  # (N, 2, 3) jac @ rotation
    lam: np.ndarray  # (N, 2, 2) inverse footprint covariance
    view_dirs: np.ndarray  # (N, 3)
    view_dists: np.ndarray  # (N,)
    sh_vals: np.ndarray  # (N, 16)
    colors_raw: np.ndarray  # (N, 3) before the non-negativity clamp
    colors: np.ndarray  # (N, 3)
    out_sh: np.ndarray | None  # (N, 3, 16) transfer mode only
    illumination: np.ndarray | None
    composited: np.ndarray  # indices of primitives that touched any pixel
    # Flat pair arrays, sorted by (pixel, depth, primitive index):
    pair_pixel: np.ndarray
    pair_gauss: np.ndarray
    pair_alpha: np.ndarray
    pair_g: np.ndarray
    pair_t_pre: np.ndarray
    pair_dx: np.ndarray
    pair_dy: np.ndarray
    pair_live: np.ndarray
    final_transmittance: np.ndarray  # (H * W,)


@dataclass
class RenderGradients:
    """Gradients of a scalar loss with respect to all differentiable inputs."""

    theta: np.ndarray  # (D,) same packing as scene.flatten
    camera: np.ndarray  # (3,) d(lat, lon, radius)
    illumination: np.ndarray | None  # (16,) in transfer mode


def _shade(scene: Scene, view_dirs: np.ndarray, illumination):
    """Per-primitive RGB from SH color or radiance transfer, clamped at 0."""
    sh_vals = sh_basis(view_dirs)
    if scene.mode == APPEARANCE_SH:
        out_sh = None
        colors_raw = np.einsum("nck,nk->nc", scene.appearance, sh_vals)
    else:
        if illumination is None:
            raise ValueError("transfer-mode scenes need an illumination vector")
        illumination = np.asarray(illumination, dtype=np.float64)
        if illumination.shape != (16,):
            raise ValueError(f"illumination must be a 16-vector, got {illumination.shape}")
        out_sh = np.einsum("nckj,j->nck", scene.appearance, illumination)
        colors_raw = np.einsum("nck,nk->nc", out_sh, sh_vals)
    return sh_vals, out_sh, colors_raw, np.maximum(colors_raw, 0.0)


def project_gaussian(covariance, position, camera: Camera, near_plane: float = NEAR_PLANE):
    """Project one activated Gaussian; returns (mean2d, cov2d, depth, valid).

    Invalid (behind the near plane) projections return zeroed outputs with
    the flag unset rather than raising.
    """
    cam_pos, rotation = camera_basis(camera)
    t = rotation @ (np.asarray(position, dtype=np.float64) - cam_pos)
    if t[2] <= near_plane:
        return np.zeros(2), np.zeros((2, 2)), 0.0, False
    f = camera.focal_length
    cx, cy = camera.principal_point
    mean2d = np.array([f * t[0] / t[2] + cx, f * t[1] / t[2] + cy])
    jac = np.array(
        [
            [f / t[2], 0.0, -f * t[0] / t[2] ** 2],
            [0.0, f / t[2], -f * t[1] / t[2] ** 2],
        ]
    )
    m = jac @ rotation
    cov2d = m @ np.asarray(covariance, dtype=np.float64) @ m.T + COV2D_DILATION * np.eye(2)
    return mean2d, cov2d, float(t[2]), True


def _project_batch(scene: Scene, act: ActivatedScene, camera: Camera, near_plane: float):
    """Vectorized projection of every primitive; returns the working set."""
    cam_pos, rotation = camera_basis(camera)
    rel = scene.positions - cam_pos
    t_cam = rel @ rotation.T
    tz = t_cam[:, 2]
    valid = tz > near_plane

    f = camera.focal_length
    cx, cy = camera.principal_point
    safe_tz = np.where(valid, tz, 1.0)
    mean2d = np.stack([f * t_cam[:, 0] / safe_tz + cx, f * t_cam[:, 1] / safe_tz + cy], axis=1)
    n = scene.n_primitives
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = f / safe_tz
    jac[:, 1, 1] = f / safe_tz
    jac[:, 0, 2] = -f * t_cam[:, 0] / safe_tz**2
    jac[:, 1, 2] = -f * t_cam[:, 1] / safe_tz**2
    proj = jac @ rotation
    cov2d = proj @ act.covariances @ np.swapaxes(proj, 1, 2)
    cov2d[:, 0, 0] += COV2D_DILATION
    cov2d[:, 1, 1] += COV2D_DILATION

    c00, c01, c11 = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = c00 * c11 - c01 * c01
    half_trace = 0.5 * (c00 + c11)
    disc = np.sqrt(np.maximum((0.5 * (c00 - c11)) ** 2 + c01 * c01, 0.0))
    eig_max = half_trace + disc
    eig_min = half_trace - disc
    ill = valid & ((eig_min <= 0.0) | (eig_max > MAX_CONDITION * np.maximum(eig_min, 1e-300)))
    valid = valid & ~ill

    lam = np.empty_like(cov2d)
    safe_det = np.where(det != 0.0, det, 1.0)
    lam[:, 0, 0] = c11 / safe_det
    lam[:, 1, 1] = c00 / safe_det
    lam[:, 0, 1] = lam[:, 1, 0] = -c01 / safe_det
    radius = FOOTPRINT_SIGMA * np.sqrt(np.maximum(eig_max, 0.0))
    return cam_pos, rotation, rel, t_cam, mean2d, jac, proj, lam, valid, radius, int(ill.sum())


def _build_pairs(mean2d, radius, valid, width, height):
    """Flat (primitive, pixel) pair indices for all footprint-box pixels."""
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    x0 = np.maximum(np.ceil(mean2d[idx, 0] - radius[idx]), 0).astype(np.int64)
    x1 = np.minimum(np.floor(mean2d[idx, 0] + radius[idx]), width - 1).astype(np.int64) + 1
    y0 = np.maximum(np.ceil(mean2d[idx, 1] - radius[idx]), 0).astype(np.int64)
    y1 = np.minimum(np.floor(mean2d[idx, 1] + radius[idx]), height - 1).astype(np.int64) + 1
    box_w = np.maximum(x1 - x0, 0)
    box_h = np.maximum(y1 - y0, 0)
    sizes = box_w * box_h
    keep = sizes > 0
    idx, x0, y0, box_w, sizes = idx[keep], x0[keep], y0[keep], box_w[keep], sizes[keep]
    total = int(sizes.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    gauss = np.repeat(idx, sizes)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    local = np.arange(total, dtype=np.int64) - np.repeat(starts, sizes)
    w_rep = np.repeat(box_w, sizes)
    rows = np.repeat(y0, sizes) + local // w_rep
    cols = np.repeat(x0, sizes) + local % w_rep
    return gauss, rows, cols


def render(
    scene: Scene,
    camera: Camera,
    illumination=None,
    *,
    record: bool = False,
    near_plane: float = NEAR_PLANE,
) -> RenderOutput:
    """Render a scene through depth-sorted alpha compositing.

    Per pixel, each valid projected Gaussian contributes
    ``alpha = opacity * exp(-0.5 d^T cov2d^{-1} d)`` clamped to
    [0, ``ALPHA_LIMIT``] and zeroed below ``ALPHA_CUTOFF``; colors accumulate
    front to back with the remaining transmittance going to the background.
    Pass ``record=True`` to keep the blend records the backward pass needs.
    """
    height, width = camera.height, camera.width
    n_pixels = height * width
    act = activate(scene)
    (
        cam_pos,
        rotation,
        rel,
        t_cam,
        mean2d,
        jac,
        proj,
        lam,
        valid,
        radius,
        n_ill,
    ) = _project_batch(scene, act, camera, near_plane)

    dists = np.linalg.norm(rel, axis=1)
    view_dirs = rel / np.maximum(dists, 1e-12)[:, None]
    sh_vals, out_sh, colors_raw, colors = _shade(scene, view_dirs, illumination)

    gauss, rows, cols = _build_pairs(mean2d, radius, valid, width, height)
    dx = cols - mean2d[gauss, 0]
    dy = rows - mean2d[gauss, 1]
    power = -0.5 * (
        lam[gauss, 0, 0] * dx * dx + 2.0 * lam[gauss, 0, 1] * dx * dy + lam[gauss, 1, 1] * dy * dy
    )
    g = np.exp(power)
    alpha = np.minimum(act.opacities[gauss] * g, ALPHA_LIMIT)
    contributing = alpha >= ALPHA_CUTOFF
    gauss, rows, cols = gauss[contributing], rows[contributing], cols[contributing]
    alpha, g, dx, dy = alpha[contributing], g[contributing], dx[contributing], dy[contributing]

    # Per-pixel front-to-back order; ties in depth break by primitive index.
    pixel = rows * width + cols
    order = np.lexsort((gauss, t_cam[gauss, 2], pixel))
    pixel, gauss = pixel[order], gauss[order]
    alpha, g, dx, dy = alpha[order], g[order], dx[order], dy[order]

    color_flat = np.zeros((n_pixels, 3))
    depth_flat = np.zeros(n_pixels)
    transmittance = np.ones(n_pixels)
    if pixel.size:
        # Segmented log-transmittance: cum_before resets at pixel changes.
        log_rest = np.log1p(-alpha)
        csum = np.cumsum(log_rest)
        cum_before = csum - log_rest
        seg_start = np.ones(pixel.size, dtype=bool)
        seg_start[1:] = pixel[1:] != pixel[:-1]
        seg_id = np.cumsum(seg_start) - 1
        start_positions = np.flatnonzero(seg_start)
        base = cum_before[start_positions]
        t_pre = np.exp(cum_before - base[seg_id])
        weight = alpha * t_pre

        for ch in range(3):
            color_flat[:, ch] = np.bincount(
                pixel, weights=weight * colors[gauss, ch], minlength=n_pixels
            )
        depth_flat = np.bincount(pixel, weights=weight * t_cam[gauss, 2], minlength=n_pixels)
        seg_end = np.append(seg_start[1:], True)
        transmittance[pixel[seg_end]] = np.exp(csum[seg_end] - base[seg_id[seg_end]])
    else:
        t_pre = np.zeros(0)

    color_flat += transmittance[:, None] * scene.background
    color_img = color_flat.reshape(height, width, 3)
    alpha_img = (1.0 - transmittance).reshape(height, width)
    depth_img = depth_flat.reshape(height, width)

    records = None
    if record:
        records = RenderRecords(
            camera_position=cam_pos,
            camera_rotation=rotation,
            act=act,
            rel=rel,
            t_cam=t_cam,
            mean2d=mean2d,
            jac=jac,
            proj=proj,
            lam=lam,
            view_dirs=view_dirs,
            view_dists=dists,
            sh_vals=sh_vals,
            colors_raw=colors_raw,
            colors=colors,
            out_sh=out_sh,
            illumination=None
            if illumination is None
            else np.asarray(illumination, dtype=np.float64),
            composited=np.unique(gauss),
            pair_pixel=pixel,
            pair_gauss=gauss,
            pair_alpha=alpha,
            pair_g=g,
            pair_t_pre=t_pre,
            pair_dx=dx,
            pair_dy=dy,
            pair_live=act.opacities[gauss] * g < ALPHA_LIMIT,
            final_transmittance=transmittance,
        )
    return RenderOutput(
        color=ImageBuffer.from_array(color_img),
        alpha=alpha_img,
        depth=depth_img,
        records=records,
        diagnostics={
            "skipped_ill_conditioned": n_ill,
            "composited": int(np.unique(gauss).size),
            "pairs": int(pixel.size),
        },
    )


def _segmented_suffix(values: np.ndarray, seg_id: np.ndarray, n_segments: int) -> np.ndarray:
    """Per entry: sum of the later entries in its segment (exclusive)."""
    csum = np.cumsum(values)
    totals = np.bincount(seg_id, weights=values, minlength=n_segments)
    seg_totals_cum = np.cumsum(totals)
    # Sum of everything up to and including my segment, minus my prefix sum.
    return seg_totals_cum[seg_id] - csum


def render_backward(
    scene: Scene,
    camera: Camera,
    d_color: np.ndarray,
    output: RenderOutput,
) -> RenderGradients:
    """Pull per-pixel color-loss gradients back to all inputs.

    ``d_color`` is the (H, W, 3) gradient of the loss with respect to the
    rendered image. Requires the blend records of a matching forward render;
    gradients flow through the color output (alpha and depth are diagnostic
    outputs).
    """
    rec = output.records
    if rec is None:
        raise ValueError("render_backward needs a forward pass with record=True")
    d_color = np.asarray(d_color, dtype=np.float64)
    n = scene.n_primitives
    d_color_flat = d_color.reshape(-1, 3)

    d_colors = np.zeros((n, 3))
    d_opacity = np.zeros(n)
    d_mean2d = np.zeros((n, 2))
    d_cov2d = np.zeros((n, 2, 2))

    pixel, gauss = rec.pair_pixel, rec.pair_gauss
    if pixel.size:
        alpha, g, t_pre = rec.pair_alpha, rec.pair_g, rec.pair_t_pre
        seg_start = np.ones(pixel.size, dtype=bool)
        seg_start[1:] = pixel[1:] != pixel[:-1]
        seg_id = np.cumsum(seg_start) - 1
        n_segments = int(seg_id[-1]) + 1

        weight = alpha * t_pre
        dc = d_color_flat[pixel]  # (pairs, 3)
        pair_colors = rec.colors[gauss]
        for ch in range(3):
            d_colors[:, ch] = np.bincount(
                gauss, weights=dc[:, ch] * weight, minlength=n
            )

        # dC/dalpha = t_pre * c - (suffix composited behind me) / (1 - alpha);
        # the suffix includes the background term.
        t_final = rec.final_transmittance[pixel]
        inv_rest = 1.0 / (1.0 - alpha)
        d_alpha = np.zeros(pixel.size)
        for ch in range(3):
            suffix = _segmented_suffix(weight * pair_colors[:, ch], seg_id, n_segments)
            suffix += t_final * scene.background[ch]
            d_alpha += dc[:, ch] * (t_pre * pair_colors[:, ch] - suffix * inv_rest)
        d_alpha = np.where(rec.pair_live, d_alpha, 0.0)

        d_opacity = np.bincount(gauss, weights=d_alpha * g, minlength=n)
        d_power = d_alpha * rec.act.opacities[gauss] * g
        vx = rec.lam[gauss, 0, 0] * rec.pair_dx + rec.lam[gauss, 0, 1] * rec.pair_dy
        vy = rec.lam[gauss, 0, 1] * rec.pair_dx + rec.lam[gauss, 1, 1] * rec.pair_dy
        d_mean2d[:, 0] = np.bincount(gauss, weights=d_power * vx, minlength=n)
        d_mean2d[:, 1] = np.bincount(gauss, weights=d_power * vy, minlength=n)
        # d power / d cov2d = +0.5 (lam d)(lam d)^T
        d_cov2d[:, 0, 0] = 0.5 * np.bincount(gauss, weights=d_power * vx * vx, minlength=n)
        d_cov2d[:, 1, 1] = 0.5 * np.bincount(gauss, weights=d_power * vy * vy, minlength=n)
        cross = 0.5 * np.bincount(gauss, weights=d_power * vx * vy, minlength=n)
        d_cov2d[:, 0, 1] = cross
        d_cov2d[:, 1, 0] = cross

    # Batched pullback through projection, shading, and activation for the
    # subset of primitives that composited.
    sel = rec.composited
    f = camera.focal_length
    rot = rec.camera_rotation
    d_theta_fields = {
        "position": np.zeros((n, 3)),
        "log_scale": np.zeros((n, 3)),
        "rotation": np.zeros((n, 4)),
        "opacity_logit": np.zeros(n),
        "appearance": np.zeros_like(scene.appearance),
    }
    d_cam_position = np.zeros(3)
    d_cam_rotation = np.zeros((3, 3))
    d_illum = None if scene.mode == APPEARANCE_SH else np.zeros(16)

    if sel.size:
        g2 = d_cov2d[sel]
        m = rec.proj[sel]
        sigma = rec.act.covariances[sel]
        d_sigma = np.einsum("nij,nik,njl->nkl", g2, m, m)
        d_m = (g2 + np.swapaxes(g2, 1, 2)) @ (m @ sigma)
        d_jac = d_m @ rot.T
        d_cam_rotation += np.einsum("nac,nab->bc", d_m, rec.jac[sel])

        t = rec.t_cam[sel]
        tz = t[:, 2]
        d_t = np.zeros_like(t)
        d_t[:, 0] = f / tz * d_mean2d[sel, 0]
        d_t[:, 1] = f / tz * d_mean2d[sel, 1]
        d_t[:, 2] = -f * (t[:, 0] * d_mean2d[sel, 0] + t[:, 1] * d_mean2d[sel, 1]) / tz**2
        d_t[:, 0] += d_jac[:, 0, 2] * (-f / tz**2)
        d_t[:, 1] += d_jac[:, 1, 2] * (-f / tz**2)
        d_t[:, 2] += (d_jac[:, 0, 0] + d_jac[:, 1, 1]) * (-f / tz**2)
        d_t[:, 2] += d_jac[:, 0, 2] * (2.0 * f * t[:, 0] / tz**3)
        d_t[:, 2] += d_jac[:, 1, 2] * (2.0 * f * t[:, 1] / tz**3)

        d_pos = d_t @ rot
        d_cam_rotation += np.einsum("na,nb->ab", d_t, rec.rel[sel])
        d_cam_position -= d_pos.sum(axis=0)

        # Shading: color = max(0, <coeff, Y>) per channel.
        live_color = rec.colors_raw[sel] > 0.0
        dcr = np.where(live_color, d_colors[sel], 0.0)
        if scene.mode == APPEARANCE_SH:
            d_theta_fields["appearance"][sel] = np.einsum("nc,nk->nck", dcr, rec.sh_vals[sel])
            d_y = np.einsum("nc,nck->nk", dcr, scene.appearance[sel])
        else:
            d_out_sh = np.einsum("nc,nk->nck", dcr, rec.sh_vals[sel])
            d_theta_fields["appearance"][sel] = np.einsum(
                "nck,j->nckj", d_out_sh, rec.illumination
            )
            d_illum += np.einsum("nck,nckj->j", d_out_sh, scene.appearance[sel])
            d_y = np.einsum("nc,nck->nk", dcr, rec.out_sh[sel])
        d_dir = np.einsum("nkj,nk->nj", sh_basis_grad(rec.view_dirs[sel]), d_y)
        dirs = rec.view_dirs[sel]
        radial = np.sum(d_dir * dirs, axis=1, keepdims=True)
        d_rel = (d_dir - radial * dirs) / rec.view_dists[sel][:, None]
        d_pos += d_rel
        d_cam_position -= d_rel.sum(axis=0)

        d_theta_fields["position"][sel] = d_pos
        d_theta_fields["opacity_logit"][sel] = opacity_backward(
            rec.act.opacities[sel], d_opacity[sel]
        )

        act_sel = ActivatedScene(
            scales=rec.act.scales[sel],
            rotations_unit=rec.act.rotations_unit[sel],
            rot_mats=rec.act.rot_mats[sel],
            covariances=rec.act.covariances[sel],
            opacities=rec.act.opacities[sel],
        )
        d_ls, d_rotmat = covariance_backward(act_sel, d_sigma)
        d_q_unit = rotmat_quat_backward(rec.act.rotations_unit[sel], d_rotmat)
        d_theta_fields["log_scale"][sel] = d_ls
        d_theta_fields["rotation"][sel] = quat_normalize_backward(
            scene.rotations[sel], d_q_unit
        )

    d_lat, d_lon, d_radius = camera_basis_backward(camera, d_cam_position, d_cam_rotation)

    theta_grad = np.concatenate(
        [
            d_theta_fields["position"],
            d_theta_fields["log_scale"],
            d_theta_fields["rotation"],
            d_theta_fields["opacity_logit"][:, None],
            d_theta_fields["appearance"].reshape(n, -1),
        ],
        axis=1,
    ).ravel()
    return RenderGradients(
        theta=theta_grad,
        camera=np.array([d_lat, d_lon, d_radius]),
        illumination=d_illum,
    )
