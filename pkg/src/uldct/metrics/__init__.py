"""Full-reference image quality metrics.

Contour group: FSIM, GMSD, SSIM. Texture group: VIF, NQM, PSNR, RMSE.
Asymmetric metrics take ``(candidate, reference)`` in that order.
"""
from .fsim import fsim, phase_congruency
from .nqm import nqm
from .report import (
    METRIC_NAMES,
    AggregateReport,
    MetricReport,
    aggregate,
    compute_metrics,
    evaluate_split,
    means_csv,
    table1_csv,
)
from .structural import (
    DATA_RANGE,
    MetricError,
    check_pair as check_pair_images,
    gaussian_blur,
    gmsd,
    psnr,
    rmse,
    ssim,
    ssim_batch,
    ssim_from_moments,
    ssim_map,
)
from .vif import vif

__all__ = [
    "DATA_RANGE",
    "METRIC_NAMES",
    "AggregateReport",
    "MetricError",
    "MetricReport",
    "aggregate",
    "check_pair_images",
    "compute_metrics",
    "evaluate_split",
    "fsim",
    "gaussian_blur",
    "gmsd",
    "means_csv",
    "nqm",
    "phase_congruency",
    "psnr",
    "rmse",
    "ssim",
    "ssim_batch",
    "ssim_from_moments",
    "ssim_map",
    "table1_csv",
    "vif",
]
