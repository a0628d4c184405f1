"""Noise quality measure (NQM), contrast-pyramid SNR in dB.

Follows the Damera-Venkata et al. construction: six cosine-log bandpass
filters in the DFT domain split each image into a low-pass base and five
bands; local band contrast is masked by the reference contrast and
thresholded by a contrast sensitivity function; the score is the SNR of the
restored reference against the restored candidate.

Viewing geometry is the usual default for this measure: viewing angle
parameter ``(1/3.5) * 180/pi`` degrees and band centres 2, 4, 8, 16, 32
cycles per image. These psychophysical settings are not tied to CT, so
scores are reported as approximate.
"""
from __future__ import annotations

import numpy as np

from .structural import MetricError, PSNR_CAP, check_pair

VIEWING_ANGLE = (1.0 / 3.5) * (180.0 / np.pi)
BAND_CENTRES = (2.0, 4.0, 8.0, 16.0, 32.0)
NQM_CAP = PSNR_CAP
MIN_SIZE = 32


def ctf(f_r):
    """Bandpass contrast threshold function."""
    f_r = np.asarray(f_r, dtype=np.float64)
    return 1.0 / (200.0 * 2.6 * (0.0192 + 0.114 * f_r) * np.exp(-((0.114 * f_r) ** 1.1)))


def _cos_log(r, lo, hi, outside, phase):
    inside = (r >= lo) & (r <= hi)
    w = np.where(inside, r, outside)
    return 0.5 * (1.0 + np.cos(np.pi * np.log2(w) - phase))


def band_filters(shape: tuple[int, int]) -> list[np.ndarray]:
    rows, cols = shape
    xp, yp = np.meshgrid(np.arange(-cols / 2, cols / 2), np.arange(-rows / 2, rows / 2))
    r = np.hypot(xp, yp)
    filters = [
        _cos_log(r + 2, 1, 4, 4.0, np.pi),
        _cos_log(r, 1, 4, 4.0, np.pi),
        _cos_log(r, 2, 8, 0.5, 0.0),
        _cos_log(r, 4, 16, 4.0, np.pi),
        _cos_log(r, 8, 32, 0.5, 0.0),
        _cos_log(r, 16, 64, 4.0, np.pi),
    ]
    return [np.fft.fftshift(f) for f in filters]


def _bands(img: np.ndarray, filters: list[np.ndarray]) -> list[np.ndarray]:
    spec = np.fft.fft2(img)
    return [np.real(np.fft.ifft2(spec * f)) for f in filters]


def _safe_div(num, den):
    tiny = 1e-12
    den = np.where(np.abs(den) < tiny, np.where(den < 0, -tiny, tiny), den)
    return num / den


def nqm(candidate, reference) -> float:
    """NQM of ``candidate`` against ``reference`` in dB (capped at 99)."""
    query, ref = check_pair(candidate, reference)
    if ref.ndim != 2 or min(ref.shape) < MIN_SIZE:
        raise MetricError(f"nqm needs 2-d images of at least {MIN_SIZE}x{MIN_SIZE}, got {ref.shape}")
    filters = band_filters(ref.shape)
    l0, *a = _bands(ref, filters)
    li0, *ai = _bands(query, filters)

    restored_ref = np.zeros_like(ref)
    restored_query = np.zeros_like(ref)
    base, base_i = l0.copy(), li0.copy()
    for i in range(5):
        c = _safe_div(a[i], base)
        ci = _safe_div(ai[i], base_i)
        base += a[i]
        base_i += ai[i]

        # suprathreshold masking: bands the observer cannot tell apart are copied
        ci_clip = np.where(np.abs(ci) > 1.0, 1.0, ci)
        ct = ctf(i + 1)
        masking = ct * (0.86 * (c / ct - 1.0) + 0.3)
        aim = np.where(np.abs(ci_clip - c) - masking < 0.0, a[i], ai[i])

        d = ctf(BAND_CENTRES[i] / VIEWING_ANGLE)
        restored_ref += np.where(np.abs(c) < d, 0.0, a[i])
        restored_query += np.where(np.abs(ci) < d, 0.0, aim)

    noise = float(np.sum((restored_ref - restored_query) ** 2))
    signal = float(np.sum(restored_ref**2))
    if noise == 0.0:
        return NQM_CAP
    if signal == 0.0:
        return -NQM_CAP
    return float(np.clip(10.0 * np.log10(signal / noise), -NQM_CAP, NQM_CAP))
