"""SSIM, GMSD, PSNR and RMSE for images normalized to ``[0, data_range]``.

All windowed filters use symmetric (half-sample) boundary extension.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

DATA_RANGE = 1.0
PSNR_CAP = 99.0

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window

# Gradient-magnitude stabilizer: 170 on a 0..255 scale.
GMSD_C = 170.0 / 255.0**2

PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
PREWITT_Y = PREWITT_X.T.copy()


class MetricError(ValueError):
    pass


def check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"extent mismatch: {a.shape} vs {b.shape}")
    return a, b



def gaussian_kernel1d(sigma: float = SSIM_SIGMA, radius: int = SSIM_RADIUS) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(x: np.ndarray, sigma: float = SSIM_SIGMA, radius: int = SSIM_RADIUS) -> np.ndarray:
    """Separable Gaussian over the last two axes (leading axes are a batch)."""
    k = gaussian_kernel1d(sigma, radius)
    out = correlate1d(x, k, axis=-1, mode="reflect")
    return correlate1d(out, k, axis=-2, mode="reflect")


def ssim_from_moments(mu_a, mu_b, var_a, var_b, cov, data_range: float = DATA_RANGE):
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def ssim_map(a, b, data_range: float = DATA_RANGE) -> np.ndarray:
    a, b = check_pair(a, b)
    mu_a = gaussian_blur(a)
    mu_b = gaussian_blur(b)
    var_a = gaussian_blur(a * a) - mu_a**2
    var_b = gaussian_blur(b * b) - mu_b**2
    cov = gaussian_blur(a * b) - mu_a * mu_b
    return ssim_from_moments(mu_a, mu_b, var_a, var_b, cov, data_range)


def ssim(a, b, data_range: float = DATA_RANGE) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5)."""
    return float(ssim_map(a, b, data_range).mean())


def ssim_batch(a: np.ndarray, b: np.ndarray, data_range: float = DATA_RANGE) -> np.ndarray:
    """SSIM for stacks of images ``[N, H, W]``; returns ``[N]``."""
    a, b = check_pair(a, b)
    mu_a = gaussian_blur(a)
    mu_b = gaussian_blur(b)
    var_a = gaussian_blur(a * a) - mu_a**2
    var_b = gaussian_blur(b * b) - mu_b**2
    cov = gaussian_blur(a * b) - mu_a * mu_b
    return ssim_from_moments(mu_a, mu_b, var_a, var_b, cov, data_range).mean(axis=(-2, -1))


def rmse(a, b) -> float:
    a, b = check_pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a, b, data_range: float = DATA_RANGE) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 dB for identical inputs."""
    a, b = check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(data_range**2 / mse)))


def _correlate2d(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    from scipy.ndimage import correlate

    return correlate(x, k, mode="reflect")


def gradient_magnitude(x: np.ndarray) -> np.ndarray:
    gx = _correlate2d(x, PREWITT_X)
    gy = _correlate2d(x, PREWITT_Y)
    return np.sqrt(gx**2 + gy**2)


def gmsd(a, b, c: float = GMSD_C) -> float:
    """Gradient magnitude similarity deviation (0 for identical images).

    Full resolution: the 2x average-pool of the original recipe is skipped
    because desk-scale images are already small.
    """
    a, b = check_pair(a, b)
    ma = gradient_magnitude(a)
    mb = gradient_magnitude(b)
    gms = (2 * ma * mb + c) / (ma**2 + mb**2 + c)
    return float(gms.std())
