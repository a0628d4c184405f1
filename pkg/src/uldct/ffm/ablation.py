"""Frequency-domain versus image-domain flow matching under identical seeds."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from ..metrics import AggregateReport, evaluate_split, means_csv
from .network import VelocityNetConfig
from .sampler import SamplerConfig, sample_images
from .train import TrainConfig, TrainResult, train

DOMAIN_ROWS = ("Frequency", "Image")


@dataclass
class DomainAblation:
    reports: dict[str, AggregateReport]
    runs: dict[str, TrainResult]

    @property
    def same_data_order(self) -> bool:
        digests = {r.order_digest for r in self.runs.values()}
        return len(digests) == 1 and "" not in digests

    def csv(self) -> str:
        return means_csv("Domain", {k: self.reports[k] for k in DOMAIN_ROWS})


def ablation_domain(
    pairs: Sequence,
    test_inputs: Mapping[str, np.ndarray],
    test_labels: Mapping[str, np.ndarray],
    train_cfg: TrainConfig,
    net_cfg: VelocityNetConfig,
    sampler_cfg: SamplerConfig | None = None,
) -> DomainAblation:
    """Train and evaluate the same setup with the frequency modules on and off."""
    ids = sorted(test_inputs)
    stack = np.stack([test_inputs[k] for k in ids])
    reports, runs = {}, {}
    for row, flag in zip(DOMAIN_ROWS, (True, False)):
        res = train(pairs, train_cfg, replace(net_cfg, frequency_module=flag))
        out = sample_images(res.net, stack, sampler_cfg)
        reports[row] = evaluate_split(dict(zip(ids, out)), test_labels)
        runs[row] = res
    return DomainAblation(reports, runs)
