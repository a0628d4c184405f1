"""Feature similarity index (FSIM) for grayscale images.

Phase congruency follows Kovesi's log-Gabor formulation as used by the
reference FSIM code. Constants:

* 4 scales, 4 orientations, minimum wavelength 6, scale multiplier 2
* sigmaOnf 0.55, dThetaOnSigma 1.2, noise multiplier k 2.0, epsilon 1e-4
* low-pass cutoff 0.45 with order 15
* T1 = 0.85 (phase congruency), T2 = 160 (gradient, 0..255 scale)
* Scharr-type gradient ``[3 0 -3; 10 0 -10; 3 0 -3] / 16``

Inputs in ``[0, data_range]`` are rescaled to 0..255 so T2 keeps its
published meaning.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate

from .structural import DATA_RANGE, MetricError, check_pair

NSCALE = 4
NORIENT = 4
MIN_WAVELENGTH = 6.0
MULT = 2.0
SIGMA_ON_F = 0.55
D_THETA_ON_SIGMA = 1.2
NOISE_K = 2.0
EPSILON = 1e-4
T1 = 0.85
T2 = 160.0
MIN_SIZE = 32

SCHARR_X = np.array([[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]]) / 16.0
SCHARR_Y = SCHARR_X.T.copy()


def _freq_grid(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    def axis(n):
        if n % 2:
            return np.arange(-(n - 1) / 2, (n - 1) / 2 + 1) / (n - 1)
        return np.arange(-n / 2, n / 2) / n

    x, y = np.meshgrid(axis(cols), axis(rows))
    radius = np.fft.ifftshift(np.sqrt(x**2 + y**2))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    return radius, theta


def _lowpass(radius: np.ndarray, cutoff: float = 0.45, order: int = 15) -> np.ndarray:
    return 1.0 / (1.0 + (radius / cutoff) ** (2 * order))


def phase_congruency(img: np.ndarray) -> np.ndarray:
    rows, cols = img.shape
    radius, theta = _freq_grid(rows, cols)
    lp = _lowpass(radius)
    radius = radius.copy()
    radius[0, 0] = 1.0
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    theta_sigma = np.pi / NORIENT / D_THETA_ON_SIGMA

    log_gabor = []
    for s in range(NSCALE):
        fo = 1.0 / (MIN_WAVELENGTH * MULT**s)
        lg = np.exp(-(np.log(radius / fo) ** 2) / (2 * np.log(SIGMA_ON_F) ** 2)) * lp
        lg[0, 0] = 0.0
        log_gabor.append(lg)

    image_fft = np.fft.fft2(img)
    energy_all = np.zeros((rows, cols))
    an_all = np.zeros((rows, cols))
    for o in range(NORIENT):
        angle = o * np.pi / NORIENT
        ds = sin_t * np.cos(angle) - cos_t * np.sin(angle)
        dc = cos_t * np.cos(angle) + sin_t * np.sin(angle)
        spread = np.exp(-(np.abs(np.arctan2(ds, dc)) ** 2) / (2 * theta_sigma**2))

        eo, ifft_filters = [], []
        sum_e = np.zeros((rows, cols))
        sum_o = np.zeros((rows, cols))
        sum_an = np.zeros((rows, cols))
        em_n = 0.0
        for s in range(NSCALE):
            filt = log_gabor[s] * spread
            ifft_filters.append(np.real(np.fft.ifft2(filt)) * np.sqrt(rows * cols))
            resp = np.fft.ifft2(image_fft * filt)
            eo.append(resp)
            sum_an += np.abs(resp)
            sum_e += resp.real
            sum_o += resp.imag
            if s == 0:
                em_n = float(np.sum(filt**2))

        x_energy = np.sqrt(sum_e**2 + sum_o**2) + EPSILON
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.zeros((rows, cols))
        for resp in eo:
            e, od = resp.real, resp.imag
            energy += e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)

        median_e2n = np.median(np.abs(eo[0]) ** 2)
        mean_e2n = -median_e2n / np.log(0.5)
        noise_power = mean_e2n / em_n if em_n > 0 else 0.0
        est_sum_an2 = sum(f**2 for f in ifft_filters)
        est_sum_aiaj = np.zeros((rows, cols))
        for i in range(NSCALE - 1):
            for j in range(i + 1, NSCALE):
                est_sum_aiaj += ifft_filters[i] * ifft_filters[j]
        noise_energy2 = 2 * noise_power * est_sum_an2.sum() + 4 * noise_power * est_sum_aiaj.sum()
        tau = np.sqrt(max(noise_energy2, 0.0) / 2)
        noise_mean = tau * np.sqrt(np.pi / 2)
        noise_sigma = np.sqrt((2 - np.pi / 2) * tau**2)
        thresh = (noise_mean + NOISE_K * noise_sigma) / 1.7
        energy_all += np.maximum(energy - thresh, 0.0)
        an_all += sum_an

    return energy_all / (an_all + 1e-12)


def fsim(a, b, data_range: float = DATA_RANGE) -> float:
    a, b = check_pair(a, b)
    if a.ndim != 2 or min(a.shape) < MIN_SIZE:
        raise MetricError(f"fsim needs 2-d images of at least {MIN_SIZE}x{MIN_SIZE}, got {a.shape}")
    scale = 255.0 / data_range
    ya, yb = a * scale, b * scale
    pc_a, pc_b = phase_congruency(ya), phase_congruency(yb)
    ga = np.hypot(correlate(ya, SCHARR_X, mode="reflect"), correlate(ya, SCHARR_Y, mode="reflect"))
    gb = np.hypot(correlate(yb, SCHARR_X, mode="reflect"), correlate(yb, SCHARR_Y, mode="reflect"))
    pc_sim = (2 * pc_a * pc_b + T1) / (pc_a**2 + pc_b**2 + T1)
    g_sim = (2 * ga * gb + T2) / (ga**2 + gb**2 + T2)
    pc_m = np.maximum(pc_a, pc_b)
    denom = pc_m.sum()
    if denom == 0.0:
        # No phase structure anywhere: fall back to the unweighted mean.
        return float(np.mean(g_sim * pc_sim))
    return float((g_sim * pc_sim * pc_m).sum() / denom)
