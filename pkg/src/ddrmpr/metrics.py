"""Distortion metrics and trivial-ambiguity alignment.

Fourier magnitudes are blind to global sign, conjugate inversion (periodic
coordinate reversal), and circular shifts. Before scoring, reconstructions
are aligned to the ground truth over that whole group; the search maximizes
cross-correlation, which at the fixed norms of the group transforms is the
same as minimizing MSE, so alignment can never lower PSNR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate

from .fields import ShapeError

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class Alignment:
    """The trivial-group transform applied to a reconstruction."""

    flipped: bool
    shift: tuple[int, int]
    sign: int = 1


def _as_hwc(a) -> np.ndarray:
    arr = getattr(a, "data", a)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"expected (H, W) or (H, W, C) image, got shape {arr.shape}")
    return arr


def mse(a, b) -> float:
    x, y = _as_hwc(a), _as_hwc(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; identical images give +inf."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / err))


def cap_psnr(value: float, cap: float = PSNR_CAP_DB) -> float:
    """Finite stand-in for report tables; +inf becomes the cap."""
    return float(min(value, cap))


def _gaussian_kernel2d(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    k /= k.sum()
    return np.outer(k, k)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Structural similarity with the standard 11x11 Gaussian window.

    Window sigma 1.5, K1 = 0.01, K2 = 0.03; statistics are Gaussian-weighted
    (population normalization) and the map is averaged over fully valid
    windows. Multi-channel inputs are averaged over per-channel scores.
    """
    x, y = _as_hwc(a), _as_hwc(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape[0], x.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kern = _gaussian_kernel2d(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    scores = []
    for c in range(x.shape[2]):
        xc, yc = x[:, :, c], y[:, :, c]
        mu_x = correlate(xc, kern, mode="valid")
        mu_y = correlate(yc, kern, mode="valid")
        var_x = correlate(xc * xc, kern, mode="valid") - mu_x**2
        var_y = correlate(yc * yc, kern, mode="valid") - mu_y**2
        cov = correlate(xc * yc, kern, mode="valid") - mu_x * mu_y
        s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        )
        scores.append(float(np.mean(s)))
    return float(np.mean(scores))


def _conjugate_inversion(img: np.ndarray) -> np.ndarray:
    """Periodic coordinate reversal x[p] -> x[-p mod N] on both axes."""
    ih = (-np.arange(img.shape[0])) % img.shape[0]
    iw = (-np.arange(img.shape[1])) % img.shape[1]
    return img[np.ix_(ih, iw)]


def _shift_correlation(cand: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Correlation with gt for every circular shift of cand, channels summed."""
    total = np.zeros(cand.shape[:2])
    for c in range(cand.shape[2]):
        total += np.fft.ifft2(np.conj(np.fft.fft2(cand[:, :, c])) * np.fft.fft2(gt[:, :, c])).real
    return total


def align_ambiguities(recon, gt, search_sign: bool = False):
    """Align a reconstruction to the ground truth over the trivial group.

    Searches both orientations (original and conjugate-inverted) and all
    circular shifts via FFT cross-correlation, plus global sign when
    ``search_sign`` is set (non-negativity constraints already fix the sign,
    so the default leaves it off). The winning transform is applied jointly
    to all channels. Returns the aligned image and the transform.
    """
    r, g = _as_hwc(recon), _as_hwc(gt)
    if r.shape != g.shape:
        raise ShapeError(f"shape mismatch {r.shape} vs {g.shape}")
    best = None
    for flipped in (False, True):
        cand = _conjugate_inversion_hwc(r) if flipped else r
        cc = _shift_correlation(cand, g)
        for sign in ((1, -1) if search_sign else (1,)):
            score_map = sign * cc
            idx = np.unravel_index(np.argmax(score_map), score_map.shape)
            score = score_map[idx]
            if best is None or score > best[0]:
                best = (score, flipped, (int(idx[0]), int(idx[1])), sign)
    _, flipped, shift, sign = best
    out = _conjugate_inversion_hwc(r) if flipped else r
    out = np.roll(out, shift=shift, axis=(0, 1)) * sign
    original = getattr(recon, "data", recon)
    return out.reshape(np.shape(original)), Alignment(flipped=flipped, shift=shift, sign=sign)


def _conjugate_inversion_hwc(img: np.ndarray) -> np.ndarray:
    return np.stack([_conjugate_inversion(img[:, :, c]) for c in range(img.shape[2])], axis=2)


def aligned_psnr(recon, gt, peak: float = 1.0, search_sign: bool = False) -> float:
    out, _ = align_ambiguities(recon, gt, search_sign=search_sign)
    return psnr(out, gt, peak=peak)
