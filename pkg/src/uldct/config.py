"""Experiment configuration: one YAML document, one section per pipeline stage.

Schema (every key optional, defaults shown)::

    seed: 0                      # global seed, expanded per stage
    dataset:
      n: 300
      size: 64
      split: [0.7, 0.15, 0.15]
      subjects: 6
      slice_variation: 2.0
      max_displacement: 3.0
      noise: {dose_fraction: 0.02, photon_scale: 2000.0, electronic_sigma: 0.02, floor: 0.25}
    purify:
      t: 0.0
      combination: I             # I, II or III
      presmooth_sigma: 1.0       # uLDCT presmoothing before Otsu
      morph: true                # 3x3 open+close on the uLDCT mask
      psp_threshold: 0.85
    crossing:
      p: [0.95, 0.90, 0.85]
      t_grid: [0.1, 0.2, ..., 0.9]
      pair_budget: 20000
      exhaustive_limit: 200
      split: train
    network: {base_channels: 16, depth: 2, time_embed_dim: 32, frequency_module: true}
    train: {epochs: 6, steps_per_epoch: 100, batch_size: 2, lr: 1.0e-4, split: train}
    sample: {num_steps: 10, batch_size: 8, split: test}
    evaluate: {split: test}

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .crossing import DEFAULT_P, DEFAULT_T_GRID, CrossingConfig
from .ffm.network import VelocityNetConfig
from .ffm.sampler import SamplerConfig
from .ffm.train import TrainConfig
from .phantom import SPLIT_NAMES, NoiseModel, PhantomConfig
from .purify import COMBINATIONS, PurifySettings


class ConfigError(ValueError):
    pass


def stage_seed(seed: int, stage: str) -> int:
    """Derive an independent 31-bit seed for ``stage`` from the global seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1)[0] >> 1)


@dataclass
class NoiseSection:
    dose_fraction: float = 0.02
    photon_scale: float = 2000.0
    electronic_sigma: float = 0.02
    floor: float = 0.25


@dataclass
class DatasetSection:
    n: int = 300
    size: int = 64
    split: list = field(default_factory=lambda: [0.7, 0.15, 0.15])
    subjects: int | None = 6
    slice_variation: float = 2.0
    max_displacement: float = 3.0
    noise: NoiseSection = field(default_factory=NoiseSection)


@dataclass
class PurifySection:
    t: float = 0.0
    combination: str = "I"
    presmooth_sigma: float = 1.0
    morph: bool = True
    psp_threshold: float = 0.85


@dataclass
class CrossingSection:
    p: list = field(default_factory=lambda: list(DEFAULT_P))
    t_grid: list = field(default_factory=lambda: list(DEFAULT_T_GRID))
    pair_budget: int = 20000
    exhaustive_limit: int = 200
    split: str = "train"


@dataclass
class NetworkSection:
    base_channels: int = 16
    depth: int = 2
    time_embed_dim: int = 32
    frequency_module: bool = True


@dataclass
class TrainSection:
    epochs: int = 6
    steps_per_epoch: int = 100
    batch_size: int = 2
    lr: float = 1e-4
    split: str = "train"


@dataclass
class SampleSection:
    num_steps: int = 10
    batch_size: int = 8
    split: str = "test"


@dataclass
class EvaluateSection:
    split: str = "test"


@dataclass
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetSection = field(default_factory=DatasetSection)
    purify: PurifySection = field(default_factory=PurifySection)
    crossing: CrossingSection = field(default_factory=CrossingSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainSection = field(default_factory=TrainSection)
    sample: SampleSection = field(default_factory=SampleSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)

    # -- stage configs -----------------------------------------------------

    def phantom_config(self) -> PhantomConfig:
        d = self.dataset
        return PhantomConfig(
            n=d.n,
            size=d.size,
            seed=stage_seed(self.seed, "dataset"),
            split=tuple(d.split),
            subjects=d.subjects,
            slice_variation=d.slice_variation,
            max_displacement=d.max_displacement,
            noise=NoiseModel(**asdict(d.noise)),
        )

    def purify_settings(self) -> PurifySettings:
        return PurifySettings(t=self.purify.t, presmooth_uldct=self.purify.presmooth_sigma, morph_uldct=self.purify.morph)

    def crossing_config(self) -> CrossingConfig:
        c = self.crossing
        return CrossingConfig(tuple(c.p), tuple(c.t_grid), c.pair_budget, c.exhaustive_limit, stage_seed(self.seed, "crossing"))

    def net_config(self) -> VelocityNetConfig:
        return VelocityNetConfig(**asdict(self.network), seed=stage_seed(self.seed, "network"))

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(t.epochs, t.steps_per_epoch, t.batch_size, t.lr, stage_seed(self.seed, "train"))

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(num_steps=self.sample.num_steps, batch_size=self.sample.batch_size)

    def validate(self) -> "ExperimentConfig":
        try:
            if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
                raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
            self.phantom_config()
            self.purify_settings()
            if self.purify.combination not in COMBINATIONS:
                raise ValueError(f"purify.combination must be one of {COMBINATIONS}, got {self.purify.combination!r}")
            if not 0.0 < self.purify.psp_threshold <= 1.0:
                raise ValueError("purify.psp_threshold must lie in (0, 1]")
            self.crossing_config()
            self.net_config()
            self.train_config()
            self.sampler_config()
            for name, split in (("crossing", self.crossing.split), ("train", self.train.split), ("sample", self.sample.split), ("evaluate", self.evaluate.split)):
                if split not in SPLIT_NAMES:
                    raise ValueError(f"{name}.split must be one of {SPLIT_NAMES}, got {split!r}")
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def with_overrides(self, **sections: dict) -> "ExperimentConfig":
        """Copy with individual keys replaced, e.g. ``train={"epochs": 2}``; ``seed=`` sets the global seed."""
        cfg = self
        for name, values in sections.items():
            if values is None:
                continue
            if name == "seed":
                cfg = replace(cfg, seed=values)
                continue
            values = {k: v for k, v in values.items() if v is not None}
            if values:
                cfg = replace(cfg, **{name: _build(type(getattr(cfg, name)), {**_plain(getattr(cfg, name)), **values}, name)})
        return cfg.validate()

    def to_dict(self) -> dict:
        return _plain(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _plain(obj) -> Any:
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTION_TYPES = {
    "dataset": DatasetSection,
    "noise": NoiseSection,
    "purify": PurifySection,
    "crossing": CrossingSection,
    "network": NetworkSection,
    "train": TrainSection,
    "sample": SampleSection,
    "evaluate": EvaluateSection,
}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for key, value in data.items():
        sub = _SECTION_TYPES.get(key)
        path = f"{where}.{key}" if where else key
        kwargs[key] = _build(sub, value, path) if sub is not None and is_dataclass(sub) else value
    return cls(**kwargs)


def from_dict(data: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "").validate()


def load_config(path=None) -> ExperimentConfig:
    """Parse and fully validate a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return from_dict(data)
