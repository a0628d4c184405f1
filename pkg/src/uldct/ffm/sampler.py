"""Euler integration of the learned flow from uLDCT (t = 1) to NDCT (t = 0)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

VelocityFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class SamplerConfig:
    num_steps: int = 10
    batch_size: int = 8
    clip: bool = True

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def euler_sample(x1: np.ndarray, velocity: VelocityFn, num_steps: int = 10, clip: bool = True) -> np.ndarray:
    """``x <- x - dt * v(x, t)`` for ``t = 1, 1 - dt, ..., dt``.

    ``x1`` is ``[B, 1, H, W]``; ``velocity`` receives the batch and a ``[B]``
    vector of times. Values are clipped to [0, 1] only after the last step.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    x = np.array(x1, dtype=np.float64)
    dt = 1.0 / num_steps
    for i in range(num_steps):
        t = np.full(x.shape[0], (num_steps - i) / num_steps)
        x = x - dt * velocity(x, t)
    return np.clip(x, 0.0, 1.0) if clip else x


def sample_images(net, images: np.ndarray, cfg: SamplerConfig | None = None) -> np.ndarray:
    """Denoise a stack ``[N, H, W]`` with a trained :class:`VelocityNet`."""
    cfg = cfg or SamplerConfig()
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError(f"expected [N, H, W], got {images.shape}")
    out = np.empty_like(images)
    for start in range(0, len(images), cfg.batch_size):
        batch = images[start : start + cfg.batch_size, None]
        out[start : start + len(batch)] = euler_sample(batch, net.predict, cfg.num_steps, cfg.clip)[:, 0]
    return out
