"""Mapping-path crossings between training pairs.

Each training pair ``(x, y)`` defines the straight path
``z_t = t * x + (1 - t) * y``. Two pairs *cross* when, somewhere along the
path, their intermediate images become more alike than both their
endpoints and reach a similarity floor ``p``:

    SSIM(z_a, z_b) >= p,  SSIM(z_a, z_b) > SSIM(x_a, x_b),  SSIM(z_a, z_b) > SSIM(y_a, y_b)

The crossing rate is the fraction of distinct sample pairs that cross.

Dataset-wide rates use a moment expansion: local SSIM moments of the
interpolated images are quadratic in ``t``, so each pair needs four
cross-product blurs regardless of how many ``t`` values are tested.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .metrics import DATA_RANGE, MetricError, check_pair_images, gaussian_blur, ssim
from .metrics.structural import SSIM_K1, SSIM_K2

DEFAULT_P = (0.95, 0.90, 0.85)
DEFAULT_T_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
_CHUNK = 64

Pair = tuple[np.ndarray, np.ndarray]


@dataclass
class CrossingConfig:
    p: tuple[float, ...] = DEFAULT_P
    t_grid: tuple[float, ...] = DEFAULT_T_GRID
    pair_budget: int = 20000
    exhaustive_limit: int = 200
    seed: int = 0

    def __post_init__(self):
        self.p = tuple(float(v) for v in self.p)
        self.t_grid = tuple(float(v) for v in self.t_grid)
        if not self.p or any(not 0.0 < v < 1.0 for v in self.p):
            raise ValueError(f"similarity floors must lie in (0, 1), got {self.p}")
        if not self.t_grid or any(not 0.0 < t < 1.0 for t in self.t_grid):
            raise ValueError(f"t_grid values must lie strictly inside (0, 1), got {self.t_grid}")
        if self.pair_budget < 1:
            raise ValueError("pair_budget must be positive")


@dataclass
class CrossingReport:
    rates: dict[float, float]
    crossings: dict[float, int]
    pairs_examined: int
    samples: int
    duplicates_removed: int = 0
    t_grid: tuple[float, ...] = field(default=DEFAULT_T_GRID)

    @property
    def crossing_rate(self) -> float:
        """Rate at the middle floor (0.90 with the defaults)."""
        keys = sorted(self.rates)
        return self.rates[keys[len(keys) // 2]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rates"] = {f"{k:g}": v for k, v in self.rates.items()}
        d["crossings"] = {f"{k:g}": v for k, v in self.crossings.items()}
        d["t_grid"] = list(self.t_grid)
        return d


def interpolate(x, y, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    x, y = check_pair_images(x, y)
    return t * x + (1.0 - t) * y


def path_similarity(pair_a: Pair, pair_b: Pair, t_grid: Sequence[float]) -> tuple[np.ndarray, float, float]:
    """Direct evaluation: SSIM along the grid plus the two endpoint SSIMs."""
    (xa, ya), (xb, yb) = pair_a, pair_b
    for img in (ya, xb, yb):
        check_pair_images(xa, img)
    along = np.array([ssim(interpolate(xa, ya, t), interpolate(xb, yb, t)) for t in t_grid])
    return along, ssim(xa, xb), ssim(ya, yb)


def _crosses(along: np.ndarray, s_x, s_y, p: float) -> np.ndarray:
    """Works on a single path (1-d ``along``) or a batch (``[..., T]``)."""
    s_x = np.asarray(s_x)[..., None]
    s_y = np.asarray(s_y)[..., None]
    return np.any((along >= p) & (along > s_x) & (along > s_y), axis=-1)


def pair_crosses(pair_a: Pair, pair_b: Pair, cfg: CrossingConfig | None = None, p: float | None = None) -> bool:
    cfg = cfg or CrossingConfig()
    p = cfg.p[len(cfg.p) // 2] if p is None else p
    along, s_x, s_y = path_similarity(pair_a, pair_b, cfg.t_grid)
    return bool(_crosses(along, s_x, s_y, p))


# -- batched evaluation --------------------------------------------------------

class _Moments:
    """Per-sample blurred moments as coefficient maps of quadratics in ``t``.

    For the path ``z = t * x + (1 - t) * y`` the local mean is ``my + t * d``
    with ``d = mx - my`` and the local variance is ``v0 + t * v1 + t**2 * v2``.
    Pair terms (mean products, covariance) are quadratics as well, so SSIM at
    every ``t`` comes from one small matrix product per quadratic.
    """

    def __init__(self, xs: np.ndarray, ys: np.ndarray):
        n = xs.shape[0]
        self.x = xs.reshape(n, -1)
        self.y = ys.reshape(n, -1)
        self.shape = xs.shape[1:]
        mx, my = gaussian_blur(xs), gaussian_blur(ys)
        xx, xy, yy = gaussian_blur(xs * xs), gaussian_blur(xs * ys), gaussian_blur(ys * ys)
        d = mx - my
        self.my = my.reshape(n, -1)
        self.d = d.reshape(n, -1)
        self.var = np.stack([yy - my**2, 2 * (xy - yy) - 2 * my * d, xx - 2 * xy + yy - d**2], axis=1).reshape(n, 3, -1)
        self.sq = np.stack([my**2, 2 * my * d, d**2], axis=1).reshape(n, 3, -1)

    def similarities(self, ia: np.ndarray, ib: np.ndarray, ts: Sequence[float]) -> np.ndarray:
        """SSIM between paths ``ia[k]`` and ``ib[k]`` at each ``t``: ``[len(ia), len(ts)]``."""
        x, y = self.x, self.y
        k = len(ia)
        cross = gaussian_blur(
            np.stack([x[ia] * x[ib], x[ia] * y[ib], y[ia] * x[ib], y[ia] * y[ib]], axis=1).reshape(k, 4, *self.shape)
        ).reshape(k, 4, -1)
        ma, mb, da, db = self.my[ia], self.my[ib], self.d[ia], self.d[ib]
        prod = np.stack([ma * mb, ma * db + da * mb, da * db], axis=1)
        cov = np.stack(
            [
                cross[:, 3],
                cross[:, 1] + cross[:, 2] - 2 * cross[:, 3],
                cross[:, 0] - cross[:, 1] - cross[:, 2] + cross[:, 3],
            ],
            axis=1,
        ) - prod
        powers = np.array([[1.0, t, t * t] for t in ts])
        c1 = (SSIM_K1 * DATA_RANGE) ** 2
        c2 = (SSIM_K2 * DATA_RANGE) ** 2
        lum_num = 2 * (powers @ prod) + c1
        lum_den = powers @ (self.sq[ia] + self.sq[ib]) + c1
        cs_num = 2 * (powers @ cov) + c2
        cs_den = powers @ (self.var[ia] + self.var[ib]) + c2
        lum_num *= cs_num
        lum_den *= cs_den
        lum_num /= lum_den
        return lum_num.mean(axis=-1)


def _unique(pairs: Sequence[Pair]) -> list[Pair]:
    seen, out = set(), []
    for x, y in pairs:
        x, y = check_pair_images(x, y)
        key = x.tobytes() + y.tobytes()
        if key not in seen:
            seen.add(key)
            out.append((x, y))
    return out


def select_pairs(n: int, cfg: CrossingConfig) -> np.ndarray:
    """Unordered index pairs ``[m, 2]``: all of them for small sets, else a seeded subsample."""
    if n <= cfg.exhaustive_limit:
        return np.array(list(combinations(range(n), 2)), dtype=np.intp).reshape(-1, 2)
    total = n * (n - 1) // 2
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC805]))
    ranks = np.sort(rng.choice(total, size=min(cfg.pair_budget, total), replace=False))
    # row i of the upper triangle holds pairs (i, i+1) .. (i, n-1)
    row_start = np.concatenate([[0], np.cumsum(np.arange(n - 1, 0, -1))])
    i = np.searchsorted(row_start, ranks, side="right") - 1
    j = ranks - row_start[i] + i + 1
    return np.stack([i, j], axis=1).astype(np.intp)


def crossing_rate(pairs: Sequence[Pair], cfg: CrossingConfig | None = None) -> CrossingReport:
    """Crossing rate of a dataset of ``(x, y)`` training pairs at every floor in ``cfg.p``."""
    cfg = cfg or CrossingConfig()
    if len(pairs) == 0:
        raise ValueError("empty dataset")
    uniq = _unique(pairs)
    dup = len(pairs) - len(uniq)
    if len(uniq) < 2:
        # nothing left once degenerate pairs are dropped
        return CrossingReport({p: 0.0 for p in cfg.p}, {p: 0 for p in cfg.p}, 0, len(uniq), dup, cfg.t_grid)
    shapes = {x.shape for x, _ in uniq}
    if len(shapes) != 1:
        raise MetricError(f"samples differ in extent: {sorted(shapes)}")

    mom = _Moments(np.stack([x for x, _ in uniq]), np.stack([y for _, y in uniq]))
    idx = select_pairs(len(uniq), cfg)
    ts = (*cfg.t_grid, 1.0, 0.0)  # endpoints ride along: t=1 is x, t=0 is y
    counts = {p: 0 for p in cfg.p}
    for start in range(0, len(idx), _CHUNK):
        chunk = idx[start : start + _CHUNK]
        sims = mom.similarities(chunk[:, 0], chunk[:, 1], ts)
        along, s_x, s_y = sims[:, :-2], sims[:, -2], sims[:, -1]
        for p in cfg.p:
            counts[p] += int(_crosses(along, s_x, s_y, p).sum())
    m = len(idx)
    return CrossingReport(
        rates={p: counts[p] / m for p in cfg.p},
        crossings=counts,
        pairs_examined=m,
        samples=len(uniq),
        duplicates_removed=dup,
        t_grid=cfg.t_grid,
    )


def rates_csv(reports: dict[str, CrossingReport]) -> str:
    """One row per dataset variant, one column per floor."""
    floors = sorted({p for r in reports.values() for p in r.rates}, reverse=True)
    lines = ["Dataset," + ",".join(f"p={p:g}" for p in floors) + ",pairs"]
    for name, r in reports.items():
        lines.append(f"{name}," + ",".join(f"{r.rates[p]:.6f}" for p in floors) + f",{r.pairs_examined}")
    return "\n".join(lines) + "\n"


def report_json(reports: dict[str, CrossingReport]) -> str:
    return json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2, sort_keys=True) + "\n"
