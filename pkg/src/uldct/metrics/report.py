"""Seven-metric evaluation records and their table layouts."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fsim import fsim
from .nqm import nqm
from .structural import DATA_RANGE, gmsd, psnr, rmse, ssim
from .vif import vif

# Column order of the result tables: contour group, then texture group.
METRIC_NAMES = ("FSIM", "GMSD", "SSIM", "VIF", "NQM", "PSNR", "RMSE")
HIGHER_IS_BETTER = {"FSIM": True, "GMSD": False, "SSIM": True, "VIF": True, "NQM": True, "PSNR": True, "RMSE": False}
RANGE_SLACK = 1e-6


@dataclass
class MetricReport:
    values: dict[str, float]
    data_range: float = DATA_RANGE

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def range_violations(self) -> list[str]:
        bad = []
        for name, v in self.values.items():
            if not np.isfinite(v):
                bad.append(name)
            elif name in ("SSIM", "FSIM", "VIF") and not (-1.0 - RANGE_SLACK <= v <= 1.0 + RANGE_SLACK):
                bad.append(name)
            elif name in ("RMSE", "GMSD") and v < 0:
                bad.append(name)
        return bad


@dataclass
class AggregateReport:
    mean: dict[str, float]
    std: dict[str, float]
    count: int
    per_image: list[MetricReport] = field(default_factory=list, repr=False)

    def as_report(self) -> MetricReport:
        return MetricReport(dict(self.mean))


def compute_metrics(candidate, reference, data_range: float = DATA_RANGE) -> MetricReport:
    """All seven metrics for one (candidate, reference) pair."""
    c = np.asarray(candidate, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    return MetricReport(
        {
            "FSIM": fsim(c, r, data_range),
            "GMSD": gmsd(c, r),
            "SSIM": ssim(c, r, data_range),
            "VIF": vif(c, r, data_range),
            "NQM": nqm(c, r),
            "PSNR": psnr(c, r, data_range),
            "RMSE": rmse(c, r),
        },
        data_range,
    )


def aggregate(reports: Sequence[MetricReport]) -> AggregateReport:
    if not reports:
        raise ValueError("cannot aggregate an empty set of reports")
    names = list(reports[0].values)
    table = np.array([[r.values[n] for n in names] for r in reports])
    return AggregateReport(
        mean=dict(zip(names, table.mean(axis=0).tolist())),
        std=dict(zip(names, table.std(axis=0).tolist())),
        count=len(reports),
        per_image=list(reports),
    )


def evaluate_split(denoised: Mapping[str, np.ndarray], labels: Mapping[str, np.ndarray]) -> AggregateReport:
    """Score each denoised image against its label (IP(NDCT)) by sample id."""
    if not denoised:
        raise ValueError("evaluate_split: empty set")
    if set(denoised) != set(labels):
        missing = sorted(set(denoised) ^ set(labels))
        raise KeyError(f"evaluate_split: sample ids differ: {missing[:5]}")
    return aggregate([compute_metrics(denoised[k], labels[k]) for k in sorted(denoised)])


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def table1_csv(rows: Mapping[str, AggregateReport]) -> str:
    """``Method,FSIM,...`` with ``mean±std`` cells."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Method", *METRIC_NAMES])
    for method, agg in rows.items():
        w.writerow([method, *(f"{_fmt(agg.mean[n])}±{_fmt(agg.std[n])}" for n in METRIC_NAMES)])
    return buf.getvalue()


def means_csv(first_column: str, rows: Mapping[str, MetricReport | AggregateReport]) -> str:
    """Single-value layout used by the T sweep and the domain ablation."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([first_column, *METRIC_NAMES])
    for label, rep in rows.items():
        values = rep.mean if isinstance(rep, AggregateReport) else rep.values
        w.writerow([label, *(_fmt(values[n]) for n in METRIC_NAMES)])
    return buf.getvalue()
