"""Image fidelity metrics: PSNR, single-scale SSIM, and SSIM of edge maps."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .patches import Image

#: PSNR reported for identical images instead of infinity
PSNR_CAP = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _check_same_shape(a: Image, b: Image) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(
            f"image shapes differ: {a.data.shape} vs {b.data.shape}"
        )


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB on [0, 1] images, capped at 99."""
    _check_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gray(img: Image) -> np.ndarray:
    return img.data.mean(axis=2)


def _gaussian_window() -> np.ndarray:
    half = (_SSIM_WINDOW - 1) // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


def _local_means(arr: np.ndarray) -> np.ndarray:
    # separable window, then crop to the fully-covered interior ('valid')
    g = _gaussian_window()
    half = (_SSIM_WINDOW - 1) // 2
    out = ndimage.correlate1d(arr, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_maps(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    mu_x = _local_means(x)
    mu_y = _local_means(y)
    xx = _local_means(x * x) - mu_x * mu_x
    yy = _local_means(y * y) - mu_y * mu_y
    xy = _local_means(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * xy + _SSIM_C2)
    den = (mu_x**2 + mu_y**2 + _SSIM_C1) * (xx + yy + _SSIM_C2)
    return num / den


def ssim(a: Image, b: Image) -> float:
    """Mean single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Color images are reduced to grayscale by the channel mean first.
    """
    _check_same_shape(a, b)
    if min(a.height, a.width) < _SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW} for SSIM"
        )
    return float(np.mean(_ssim_maps(_gray(a), _gray(b))))


def _edge_map(img: Image) -> np.ndarray:
    gray = _gray(img)
    gx = ndimage.sobel(gray, axis=1)
    gy = ndimage.sobel(gray, axis=0)
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    return mag / peak if peak > 0.0 else mag


def edge_ssim(a: Image, b: Image) -> float:
    """SSIM between per-image max-normalized Sobel gradient magnitudes."""
    _check_same_shape(a, b)
    if min(a.height, a.width) < _SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW} for SSIM"
        )
    return float(np.mean(_ssim_maps(_edge_map(a), _edge_map(b))))
