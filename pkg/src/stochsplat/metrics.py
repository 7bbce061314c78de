"""Image quality and uncertainty-calibration metrics.

PSNR computes MSE over all RGB channels jointly (the per-channel vs
luminance convention is ambiguous in the wild; joint RGB is what this
package reports everywhere). SSIM uses the original 11x11 Gaussian window
(sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1) evaluated on the region
where the window fully fits, falling back to global statistics for images
smaller than the window. The SSIM gradient is the exact adjoint of the
implemented windowing, which the photometric training loss relies on.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .image import as_image_array

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; identical images give ``inf``.

    Values are clamped to [0, 1] before comparison.
    """
    x = np.clip(as_image_array(a), 0.0, 1.0)
    y = np.clip(as_image_array(b), 0.0, 1.0)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k1d = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k1d / k1d.sum()


_TAPS = _gaussian_taps()
_PAD = SSIM_WINDOW // 2


def _filter_valid(x: np.ndarray) -> np.ndarray:
    """Separable window filter restricted to fully covered pixels."""
    out = correlate1d(x, _TAPS, axis=0, mode="constant")
    out = correlate1d(out, _TAPS, axis=1, mode="constant")
    return out[_PAD:-_PAD, _PAD:-_PAD]


def _filter_full(w: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_filter_valid` (the kernel is symmetric)."""
    padded = np.pad(w, _PAD)
    out = correlate1d(padded, _TAPS, axis=0, mode="constant")
    return correlate1d(out, _TAPS, axis=1, mode="constant")


def _windowed_stats(x: np.ndarray, y: np.ndarray):
    """Window-filtered means/variances/covariance on the valid region."""
    mu_x = _filter_valid(x)
    mu_y = _filter_valid(y)
    var_x = _filter_valid(x * x) - mu_x * mu_x
    var_y = _filter_valid(y * y) - mu_y * mu_y
    cov = _filter_valid(x * y) - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def _global_stats(x: np.ndarray, y: np.ndarray):
    mu_x, mu_y = x.mean(), y.mean()
    var_x = (x * x).mean() - mu_x * mu_x
    var_y = (y * y).mean() - mu_y * mu_y
    cov = (x * y).mean() - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def _ssim_terms(mu_x, mu_y, var_x, var_y, cov):
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    a1 = 2.0 * mu_x * mu_y + c1
    a2 = 2.0 * cov + c2
    b1 = mu_x * mu_x + mu_y * mu_y + c1
    b2 = var_x + var_y + c2
    return a1, a2, b1, b2, (a1 * a2) / (b1 * b2)


def ssim(a, b) -> float:
    """Mean structural similarity in [-1, 1], averaged over RGB channels."""
    x = as_image_array(a)
    y = as_image_array(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    height, width = x.shape[:2]
    windowed = height >= SSIM_WINDOW and width >= SSIM_WINDOW
    scores = []
    for ch in range(3):
        stats = (_windowed_stats if windowed else _global_stats)(x[..., ch], y[..., ch])
        scores.append(np.mean(_ssim_terms(*stats)[4]))
    return float(np.mean(scores))


def ssim_value_and_grad(a, b):
    """SSIM score plus its exact gradient with respect to the first image.

    Returns ``(score, grad)`` with ``grad`` shaped like the image. The
    gradient backpropagates through the window filtering (adjoint of the
    valid-region convolution is a full-region convolution of the symmetric
    kernel) or through the global statistics on the fallback path.
    """
    x = as_image_array(a)
    y = as_image_array(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    height, width = x.shape[:2]
    windowed = height >= SSIM_WINDOW and width >= SSIM_WINDOW
    grad = np.zeros_like(x)
    scores = []
    for ch in range(3):
        xc, yc = x[..., ch], y[..., ch]
        if windowed:
            mu_x, mu_y, var_x, var_y, cov = _windowed_stats(xc, yc)
        else:
            mu_x, mu_y, var_x, var_y, cov = _global_stats(xc, yc)
        a1, a2, b1, b2, smap = _ssim_terms(mu_x, mu_y, var_x, var_y, cov)
        scores.append(np.mean(smap))
        # Pointwise partials of S with respect to (mu_x, var_x, cov).
        inv_bb = 1.0 / (b1 * b2)
        w_mu = 2.0 * mu_y * a2 * inv_bb - 2.0 * mu_x * smap / b1
        w_var = -smap / b2
        w_cov = 2.0 * a1 * inv_bb
        if windowed:
            n_map = smap.size
            # var_x = G*(x^2) - mu_x^2 and cov = G*(xy) - mu_x mu_y, so the
            # mu_x channel also carries -2 mu_x w_var - mu_y w_cov.
            back = _filter_full(w_mu - 2.0 * mu_x * w_var - mu_y * w_cov)
            back += 2.0 * xc * _filter_full(w_var)
            back += yc * _filter_full(w_cov)
            grad[..., ch] = back / n_map
        else:
            n = xc.size
            grad[..., ch] = (
                (w_mu - 2.0 * mu_x * w_var - mu_y * w_cov) + 2.0 * xc * w_var + yc * w_cov
            ) / n
    return float(np.mean(scores)), grad / 3.0


def _sparsification_curve(errors: np.ndarray, order: np.ndarray, steps: int) -> np.ndarray:
    """Fraction of total error kept after removing k/steps of the pixels."""
    n = errors.size
    total = errors.sum()
    removed_prefix = np.concatenate(([0.0], np.cumsum(errors[order])))
    counts = (np.arange(steps) * n) // steps
    return (total - removed_prefix[counts]) / total


def ause(per_pixel_error: np.ndarray, per_pixel_uncertainty: np.ndarray, steps: int = 100) -> float:
    """Area under the sparsification error curve, in [0, 1] (0 is perfect).

    Pixels are removed in decreasing-uncertainty order in 1% steps and the
    kept error mass is compared against oracle removal in decreasing-error
    order. Rank-based, so any strictly monotone transform of the
    uncertainties leaves the score unchanged. All-zero errors give 0.
    """
    errors = np.asarray(per_pixel_error, dtype=np.float64).ravel()
    uncertainty = np.asarray(per_pixel_uncertainty, dtype=np.float64).ravel()
    if errors.shape != uncertainty.shape:
        raise ValueError(f"length mismatch: {errors.size} errors vs {uncertainty.size} uncertainties")
    if np.any(errors < 0):
        raise ValueError("errors must be non-negative")
    if errors.sum() == 0.0:
        return 0.0
    order_model = np.argsort(-uncertainty, kind="stable")
    order_oracle = np.argsort(-errors, kind="stable")
    curve_model = _sparsification_curve(errors, order_model, steps)
    curve_oracle = _sparsification_curve(errors, order_oracle, steps)
    return float(np.mean(curve_model - curve_oracle))
