"""Image purification of misaligned NDCT/uLDCT pairs.

Pipeline per pair:

1. Otsu-binarize both images into structure masks (uLDCT is presmoothed
   and morphologically cleaned by default; both switchable).
2. Common mask ``cm = m_uldct | m_ndct``.
3. Build the purified images::

       ip_uldct = (1 - cm) * ((1 - T) * uldct + T * ndct) + cm * ndct
       ip_ndct  = (1 - cm) * ndct + cm * uldct

4. Choose training pairs (combination I, II or III).
5. Score denoised uLDCT against ``ip_ndct``.

Masks are ``uint8`` arrays holding 0/1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import binary_closing, binary_opening, gaussian_filter

from .metrics import ssim

OTSU_BINS = 256
COMBINATIONS = ("I", "II", "III")
DEFAULT_PSP_THRESHOLD = 0.85
_SQUARE3 = np.ones((3, 3), dtype=bool)


class PurifyError(ValueError):
    pass


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise PurifyError(f"extent mismatch: {a.shape} vs {b.shape}")
    return a, b


def as_mask(m, shape=None) -> np.ndarray:
    m = np.asarray(m)
    if shape is not None and m.shape != tuple(shape):
        raise PurifyError(f"mask extent {m.shape} != image extent {tuple(shape)}")
    if not np.isin(m, (0, 1)).all():
        raise PurifyError("mask values must be 0 or 1")
    return m.astype(np.uint8)


# -- step 1: binarization ---------------------------------------------------

def _bin_index(img: np.ndarray, bins: int) -> tuple[np.ndarray, float, float]:
    lo, hi = float(img.min()), float(img.max())
    if not hi > lo:
        raise PurifyError("degenerate histogram: image is constant")
    idx = np.floor((img - lo) / (hi - lo) * bins).astype(np.intp)
    return np.clip(idx, 0, bins - 1), lo, hi


def otsu_threshold(img, bins: int = OTSU_BINS) -> tuple[float, int]:
    """Threshold maximizing between-class variance of a ``bins``-bin histogram.

    Returns ``(threshold, k)`` where pixels in bins ``>= k`` form the
    foreground; ``threshold`` is the lower edge of bin ``k``. Ties between
    equally good cuts go to the lowest ``k``.
    """
    img = np.asarray(img, dtype=np.float64)
    idx, lo, hi = _bin_index(img, bins)
    hist = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    p = hist / hist.sum()
    centers = lo + (np.arange(bins) + 0.5) * (hi - lo) / bins
    w0 = np.cumsum(p)[:-1]
    mu_cum = np.cumsum(p * centers)[:-1]
    mu_t = float(np.sum(p * centers))
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * w0 - mu_cum) ** 2 / (w0 * w1)
    between[(w0 <= 0) | (w1 <= 0)] = -np.inf
    k = int(np.argmax(between)) + 1
    return lo + k * (hi - lo) / bins, k


def _morph_clean(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask.astype(bool), 2, mode="edge")
    cleaned = binary_closing(binary_opening(padded, _SQUARE3), _SQUARE3)
    return cleaned[2:-2, 2:-2]


def otsu_mask(img, presmooth_sigma: float = 0.0, morph: bool = False, bins: int = OTSU_BINS) -> np.ndarray:
    """Foreground (bright structure) mask; pixels at the threshold count as foreground."""
    img = np.asarray(img, dtype=np.float64)
    if presmooth_sigma > 0:
        img = gaussian_filter(img, presmooth_sigma, mode="reflect")
    idx, _, _ = _bin_index(img, bins)
    _, k = otsu_threshold(img, bins)
    mask = idx >= k
    if morph:
        mask = _morph_clean(mask)
    return mask.astype(np.uint8)


# -- steps 2-3: mask algebra -------------------------------------------------

def common_mask(m_l, m_n) -> np.ndarray:
    m_l = as_mask(m_l)
    m_n = as_mask(m_n, m_l.shape)
    return (m_l | m_n).astype(np.uint8)


@dataclass
class ResidualDecomposition:
    v: np.ndarray
    v1: np.ndarray  # off-mask part: texture change
    v2: np.ndarray  # on-mask part: structure change


def decompose_residual(ndct, uldct, cm) -> ResidualDecomposition:
    n, u = _pair(ndct, uldct)
    c = as_mask(cm, n.shape).astype(np.float64)
    v = u - n
    return ResidualDecomposition(v, (1.0 - c) * v, c * v)


def _blend(u: np.ndarray, n: np.ndarray, t: float) -> np.ndarray:
    # Aligned pixels short-circuit so ndct is a fixed point for every t.
    return np.where(u == n, n, (1.0 - t) * u + t * n)


def ip_uldct(ndct, uldct, cm, t: float = 0.0) -> np.ndarray:
    """uLDCT carrying NDCT anatomy; ``t`` mixes NDCT texture into the off-mask part."""
    if not 0.0 <= t <= 1.0:
        raise PurifyError(f"T must lie in [0, 1], got {t}")
    n, u = _pair(ndct, uldct)
    c = as_mask(cm, n.shape).astype(np.float64)
    return (1.0 - c) * _blend(u, n, t) + c * n


def ip_ndct(ndct, uldct, cm) -> np.ndarray:
    """NDCT texture on uLDCT anatomy."""
    n, u = _pair(ndct, uldct)
    c = as_mask(cm, n.shape).astype(np.float64)
    return (1.0 - c) * n + c * u


# -- purified pairs --------------------------------------------------------

@dataclass
class PurifySettings:
    t: float = 0.0
    presmooth_uldct: float = 1.0
    presmooth_ndct: float = 0.0
    morph_uldct: bool = True
    morph_ndct: bool = False

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise PurifyError(f"T must lie in [0, 1], got {self.t}")
        if self.presmooth_uldct < 0 or self.presmooth_ndct < 0:
            raise PurifyError("presmoothing sigmas must be non-negative")


@dataclass
class PurifiedPair:
    ndct: np.ndarray
    uldct: np.ndarray
    ip_uldct: np.ndarray
    ip_ndct: np.ndarray
    cm: np.ndarray
    t_param: float
    sample_id: str = ""
    masks: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def purify_pair(ndct, uldct, settings: PurifySettings | None = None, sample_id: str = "") -> PurifiedPair:
    s = settings or PurifySettings()
    n, u = _pair(ndct, uldct)
    m_l = otsu_mask(u, s.presmooth_uldct, s.morph_uldct)
    m_n = otsu_mask(n, s.presmooth_ndct, s.morph_ndct)
    cm = common_mask(m_l, m_n)
    return PurifiedPair(
        ndct=n,
        uldct=u,
        ip_uldct=ip_uldct(n, u, cm, s.t),
        ip_ndct=ip_ndct(n, u, cm),
        cm=cm,
        t_param=float(s.t),
        sample_id=sample_id,
        masks={"m_l": m_l, "m_n": m_n},
    )


# -- steps 4-5: data selection ----------------------------------------------

@dataclass
class TrainingPair:
    """``source`` is the flow start (x1, noisy side), ``label`` the target (x0)."""

    source: np.ndarray
    label: np.ndarray
    sample_id: str
    combination: str


def make_training_pairs(samples: Iterable[PurifiedPair], combination: str = "I", t: float | None = None) -> list[TrainingPair]:
    """I: IP(uLDCT) -> NDCT; II: uLDCT -> IP(NDCT); III: both."""
    if combination not in COMBINATIONS:
        raise PurifyError(f"unknown combination {combination!r}; expected one of {COMBINATIONS}")
    samples = list(samples)
    first, second = [], []
    for s in samples:
        src = s.ip_uldct if t is None or t == s.t_param else ip_uldct(s.ndct, s.uldct, s.cm, t)
        first.append(TrainingPair(src, s.ndct, s.sample_id, "I"))
        second.append(TrainingPair(s.uldct, s.ip_ndct, s.sample_id, "II"))
    if combination == "I":
        return first
    if combination == "II":
        return second
    return first + second


def evaluation_label(sample: PurifiedPair) -> np.ndarray:
    return sample.ip_ndct


# -- patch-similarity baseline ---------------------------------------------

@dataclass
class PSPResult:
    kept: list[tuple[int, int]]
    keep_ratio: float
    scores: np.ndarray


def psp_filter(ndct, uldct, patch: int | None = None, threshold: float = DEFAULT_PSP_THRESHOLD) -> PSPResult:
    """Keep non-overlapping patches whose SSIM reaches ``threshold``.

    ``patch`` defaults to one eighth of the image side (64 px at 512).
    """
    n, u = _pair(ndct, uldct)
    h, w = n.shape
    if patch is None:
        patch = max(1, h // 8)
    if h % patch or w % patch:
        raise PurifyError(f"image {h}x{w} is not divisible into {patch}x{patch} patches")
    rows, cols = h // patch, w // patch
    scores = np.empty((rows, cols))
    kept = []
    for i in range(rows):
        for j in range(cols):
            sl = np.s_[i * patch : (i + 1) * patch, j * patch : (j + 1) * patch]
            scores[i, j] = ssim(u[sl], n[sl])
            if scores[i, j] >= threshold:
                kept.append((i, j))
    return PSPResult(kept, len(kept) / (rows * cols), scores)


def psp_keep_ratio(pairs: Sequence[tuple[np.ndarray, np.ndarray]], patch: int | None = None, threshold: float = DEFAULT_PSP_THRESHOLD) -> float:
    """Fraction of all patches kept over a set of ``(ndct, other)`` pairs."""
    kept = total = 0
    for n, other in pairs:
        res = psp_filter(n, other, patch, threshold)
        kept += len(res.kept)
        total += res.scores.size
    return kept / total if total else 0.0
