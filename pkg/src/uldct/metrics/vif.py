"""Pixel-domain visual information fidelity (VIFp).

Four scales; at scale s the Gaussian window is N = 2**(5-s) + 1 wide with
sigma N/5, and the reference/candidate are blurred and decimated by 2
before each coarser scale. The HVS noise variance is 2 on a 0..255 scale,
i.e. ``2 * (data_range/255)**2``, so rescaling both images together with
``data_range`` leaves the score unchanged.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .structural import DATA_RANGE, MetricError, check_pair

SCALES = 4
SIGMA_NSQ_255 = 2.0
EPS = 1e-10
MIN_SIZE = 32


def _window(n: int) -> np.ndarray:
    r = (n - 1) / 2
    x = np.arange(-r, r + 1)
    k = np.exp(-0.5 * (x / (n / 5.0)) ** 2)
    return k / k.sum()


def _blur(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    return correlate1d(correlate1d(x, k, axis=-1, mode="reflect"), k, axis=-2, mode="reflect")


def vif(candidate, reference, data_range: float = DATA_RANGE) -> float:
    """Information in ``candidate`` about ``reference``, relative to ``reference`` itself."""
    dist, ref = check_pair(candidate, reference)
    if ref.ndim != 2 or min(ref.shape) < MIN_SIZE:
        raise MetricError(f"vif needs 2-d images of at least {MIN_SIZE}x{MIN_SIZE}, got {ref.shape}")
    sigma_nsq = SIGMA_NSQ_255 * (data_range / 255.0) ** 2
    eps = EPS * (data_range / 255.0) ** 2
    num = den = 0.0
    for scale in range(1, SCALES + 1):
        k = _window(2 ** (SCALES - scale + 1) + 1)
        if scale > 1:
            ref = _blur(ref, k)[::2, ::2]
            dist = _blur(dist, k)[::2, ::2]
        mu1, mu2 = _blur(ref, k), _blur(dist, k)
        s1 = np.maximum(_blur(ref * ref, k) - mu1**2, 0.0)
        s2 = np.maximum(_blur(dist * dist, k) - mu2**2, 0.0)
        s12 = _blur(ref * dist, k) - mu1 * mu2

        g = s12 / (s1 + eps)
        sv = s2 - g * s12
        flat = s1 < eps
        g[flat] = 0.0
        sv[flat] = s2[flat]
        s1 = np.where(flat, 0.0, s1)
        dead = s2 < eps
        g[dead] = 0.0
        sv[dead] = 0.0
        neg = g < 0
        sv[neg] = s2[neg]
        g[neg] = 0.0
        sv = np.maximum(sv, eps)

        num += np.sum(np.log10(1.0 + g * g * s1 / (sv + sigma_nsq)))
        den += np.sum(np.log10(1.0 + s1 / sigma_nsq))
    if den == 0.0:
        return 1.0 if np.array_equal(candidate, reference) else 0.0
    return float(num / den)
