"""Velocity regression on straight paths between paired images.

For a pair ``(x1, x0)`` (noisy source, clean label) and ``t ~ U(0, 1)``::

    x_t = t * x1 + (1 - t) * x0        v_t = x1 - x0
    loss = mean((net(x_t, t) - v_t) ** 2)
"""
from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..engine import AdamState, NonFiniteError, Tensor, adam_step, mse_loss
from ..engine import checkpoint as ckpt
from .network import VelocityNet, VelocityNetConfig

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    steps_per_epoch: int = 100
    batch_size: int = 2
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "steps_per_epoch", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch


def interpolate_path(x1: np.ndarray, x0: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``t * x1 + (1 - t) * x0`` with ``t`` broadcast over ``[B, ...]``."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, *([1] * (np.ndim(x1) - 1)))
    return t * x1 + (1.0 - t) * x0


@dataclass
class TrainResult:
    net: VelocityNet
    adam: AdamState
    losses: list[float] = field(default_factory=list)
    seconds: float = 0.0
    max_residue: float = 0.0
    order_digest: str = ""  # SHA-256 over every batch's sample indices and times

    def loss_csv(self, steps_per_epoch: int) -> str:
        lines = ["step,epoch,loss"]
        for i, v in enumerate(self.losses):
            lines.append(f"{i + 1},{i // steps_per_epoch + 1},{v:.10e}")
        return "\n".join(lines) + "\n"


def _stack(pairs: Sequence, attr: str) -> np.ndarray:
    arrs = [np.asarray(getattr(p, attr), dtype=np.float64) for p in pairs]
    return np.stack(arrs)[:, None]


def train(pairs: Sequence, train_cfg: TrainConfig | None = None, net_cfg: VelocityNetConfig | None = None) -> TrainResult:
    """Fit a velocity network to training pairs (objects with ``source`` and ``label``)."""
    tc = train_cfg or TrainConfig()
    net = VelocityNet(net_cfg or VelocityNetConfig())
    if len(pairs) == 0:
        raise ValueError("no training pairs")
    x1_all = _stack(pairs, "source")
    x0_all = _stack(pairs, "label")
    n = len(pairs)

    rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 0x7A1]))
    params = net.parameter_list()
    adam = AdamState.for_params([p.data for p in params], lr=tc.lr)
    result = TrainResult(net, adam)
    start = time.perf_counter()
    order, cursor = rng.permutation(n), 0
    order_hash = hashlib.sha256()

    for step in range(tc.total_steps):
        idx = []
        for _ in range(tc.batch_size):
            if cursor == n:
                order, cursor = rng.permutation(n), 0
            idx.append(order[cursor])
            cursor += 1
        t = rng.random(tc.batch_size)
        order_hash.update(np.asarray(idx, dtype="<i8").tobytes() + t.astype("<f8").tobytes())
        x1, x0 = x1_all[idx], x0_all[idx]
        x_t = interpolate_path(x1, x0, t)
        target = x1 - x0

        net.zero_grad()
        try:
            loss = mse_loss(net(x_t, t), Tensor(target))
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteError("loss")
            loss.backward()
        except NonFiniteError as exc:
            raise TrainingDiverged(f"training diverged at step {step + 1} (lr={tc.lr}): {exc}") from exc
        adam_step([p.data for p in params], [p.grad for p in params], adam)
        result.losses.append(value)
        if net.last_residues:
            result.max_residue = max(result.max_residue, max(net.last_residues))
        if (step + 1) % tc.steps_per_epoch == 0:
            log.info("epoch %d loss %.3e", (step + 1) // tc.steps_per_epoch, value)

    result.seconds = time.perf_counter() - start
    result.order_digest = order_hash.hexdigest()
    log.info("trained %d steps in %.1fs; max discarded IFFT imaginary part %.2e", tc.total_steps, result.seconds, result.max_residue)
    return result


# -- checkpoints -------------------------------------------------------------

def descriptor(net: VelocityNet, train_cfg: TrainConfig | None = None, extra: dict | None = None) -> dict:
    d = {"format": CHECKPOINT_FORMAT, "arch": net.cfg.to_dict()}
    if train_cfg is not None:
        d["train"] = asdict(train_cfg)
    if extra:
        d.update(extra)
    return d


def save_checkpoint(path, net: VelocityNet, adam: AdamState | None = None, train_cfg: TrainConfig | None = None, extra: dict | None = None) -> Path:
    return ckpt.save(path, descriptor(net, train_cfg, extra), net.state_dict(), adam)


def load_checkpoint(path) -> tuple[VelocityNet, AdamState | None, dict]:
    desc, params, adam = ckpt.load(path)
    if desc.get("format") != CHECKPOINT_FORMAT:
        raise ckpt.CheckpointError(f"unsupported checkpoint format {desc.get('format')!r}")
    net = VelocityNet(VelocityNetConfig(**desc["arch"]))
    try:
        net.load_state_dict(params)
    except ValueError as exc:
        raise ckpt.CheckpointError(f"checkpoint does not match its architecture: {exc}") from exc
    return net, adam, desc
