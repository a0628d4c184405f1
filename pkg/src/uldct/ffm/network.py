"""U-Net velocity network with optional frequency-domain branches.

Layout for ``depth = 2`` and ``base_channels = C``::

    x -> conv_in -> block(C)  [+freq]  --------------------------- skip0
                  -> down -> block(2C) [+freq]  ------------ skip1    |
                           -> down -> block(4C) [+freq]         |     |
                                     -> up ++ skip1 -> block(2C)       |
                                               -> up ++ skip0 -> block(C) -> conv_out

Every block receives the time embedding through its own two-layer
perceptron, added channel-wise after the first convolution. Frequency
branches are inserted residually: ``h + freq(h)``.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from ..engine import (
    ShapeError,
    Tensor,
    add,
    concat,
    conv1x1,
    conv2d,
    fft2,
    ifft2,
    ifft2_residue,
    linear,
    polar,
    reshape,
    silu,
    unpolar,
    upsample2x,
)
from ..engine.fft import is_power_of_two

FREQ_MAG_INIT = 0.1


@dataclass
class VelocityNetConfig:
    base_channels: int = 16
    depth: int = 2
    time_embed_dim: int = 32
    frequency_module: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be an even number >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """``[B] -> [B, dim]``; ``t`` in [0, 1] is scaled by 1000 like a step index."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = 1000.0 * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def frequency_module(x: Tensor, w_mag: Tensor, w_phase: Tensor, residues: list | None = None) -> Tensor:
    """FFT, 1x1 convolutions on magnitude and phase, inverse FFT (real part kept)."""
    h, w = x.shape[-2:]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ShapeError(f"frequency module needs power-of-two extents, got {h}x{w}")
    mag, phase = polar(fft2(x))
    spec = unpolar(conv1x1(mag, w_mag), conv1x1(phase, w_phase))
    if residues is not None:
        residues.append(ifft2_residue(spec))
    return ifft2(spec)


class VelocityNet:
    """``forward(x_t, t)`` predicts the velocity ``x1 - x0`` at time ``t``."""

    def __init__(self, cfg: VelocityNetConfig | None = None):
        self.cfg = cfg or VelocityNetConfig()
        self.params: dict[str, Tensor] = {}
        self.last_residues: list[float] = []
        self._build()

    # -- parameters ----------------------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    def _normal(self, name: str, std: float, shape) -> np.ndarray:
        # one stream per parameter name: layers shared by the frequency and
        # image-domain variants start from identical weights
        rng = np.random.default_rng(np.random.SeedSequence([self.cfg.seed, zlib.crc32(name.encode())]))
        return rng.normal(0.0, std, shape)

    def _conv(self, name: str, cin: int, cout: int, k: int = 3, gain: float = 1.0) -> None:
        std = gain * math.sqrt(2.0 / (cin * k * k))
        self._add(f"{name}.w", self._normal(f"{name}.w", std, (cout, cin, k, k)))
        self._add(f"{name}.b", np.zeros(cout))

    def _linear(self, name: str, fin: int, fout: int) -> None:
        self._add(f"{name}.w", self._normal(f"{name}.w", math.sqrt(1.0 / fin), (fout, fin)))
        self._add(f"{name}.b", np.zeros(fout))

    def _block(self, name: str, cin: int, cout: int) -> None:
        e = self.cfg.time_embed_dim
        self._conv(f"{name}.conv1", cin, cout)
        self._linear(f"{name}.temb1", e, e)
        self._linear(f"{name}.temb2", e, cout)
        self._conv(f"{name}.conv2", cout, cout, gain=0.5)
        if cin != cout:
            self._add(f"{name}.skip.w", self._normal(f"{name}.skip.w", math.sqrt(1.0 / cin), (cout, cin, 1, 1)))

    def _freq(self, name: str, c: int) -> None:
        eye = np.eye(c)[:, :, None, None]
        self._add(f"{name}.mag", FREQ_MAG_INIT * eye + self._normal(f"{name}.mag", 0.01, (c, c, 1, 1)))
        self._add(f"{name}.phase", eye.copy())

    def channels(self, level: int) -> int:
        return self.cfg.base_channels * 2**level

    def _build(self) -> None:
        d = self.cfg.depth
        self._conv("conv_in", 1, self.channels(0))
        for lv in range(d + 1):
            if lv > 0:
                self._conv(f"down{lv}", self.channels(lv - 1), self.channels(lv))
            self._block(f"enc{lv}", self.channels(lv), self.channels(lv))
            if self.cfg.frequency_module:
                self._freq(f"freq{lv}", self.channels(lv))
        for lv in range(d - 1, -1, -1):
            self._block(f"dec{lv}", self.channels(lv + 1) + self.channels(lv), self.channels(lv))
        self._conv("conv_out", self.channels(0), 1, gain=0.1)

    def parameter_list(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if list(state) != list(self.params):
            raise ValueError("parameter names/order do not match this architecture")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"parameter {k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k] = Tensor(np.array(v, dtype=np.float64), requires_grad=True)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    # -- forward -------------------------------------------------------------

    def _p(self, name: str) -> Tensor:
        return self.params[name]

    def _conv_apply(self, name: str, x: Tensor, stride: int = 1) -> Tensor:
        w = self._p(f"{name}.w")
        return conv2d(x, w, self._p(f"{name}.b"), stride=stride, padding=w.shape[-1] // 2)

    def _block_apply(self, name: str, x: Tensor, emb: Tensor) -> Tensor:
        h = self._conv_apply(f"{name}.conv1", x)
        te = silu(linear(emb, self._p(f"{name}.temb1.w"), self._p(f"{name}.temb1.b")))
        te = linear(te, self._p(f"{name}.temb2.w"), self._p(f"{name}.temb2.b"))
        h = silu(add(h, reshape(te, (te.shape[0], te.shape[1], 1, 1))))
        h = self._conv_apply(f"{name}.conv2", h)
        skip = conv1x1(x, self._p(f"{name}.skip.w")) if f"{name}.skip.w" in self.params else x
        return silu(add(skip, h))

    def forward(self, x_t, t) -> Tensor:
        x = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=np.float64))
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"velocity net expects [B, 1, H, W], got {x.shape}")
        b, _, hh, ww = x.shape
        scale = 2**self.cfg.depth
        if hh % scale or ww % scale:
            raise ShapeError(f"extents {hh}x{ww} must be divisible by {scale}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (b,))
        if np.any((t < 0) | (t > 1)):
            raise ValueError("t must lie in [0, 1]")
        emb = Tensor(sinusoidal_embedding(t, self.cfg.time_embed_dim))
        self.last_residues = []

        h = self._conv_apply("conv_in", x)
        skips = []
        for lv in range(self.cfg.depth + 1):
            if lv > 0:
                h = silu(self._conv_apply(f"down{lv}", h, stride=2))
            h = self._block_apply(f"enc{lv}", h, emb)
            if self.cfg.frequency_module:
                h = add(h, frequency_module(h, self._p(f"freq{lv}.mag"), self._p(f"freq{lv}.phase"), self.last_residues))
            skips.append(h)
        for lv in range(self.cfg.depth - 1, -1, -1):
            h = concat([upsample2x(h), skips[lv]], axis=1)
            h = self._block_apply(f"dec{lv}", h, emb)
        return self._conv_apply("conv_out", h)

    __call__ = forward

    def predict(self, x_t: np.ndarray, t) -> np.ndarray:
        """Forward pass without recording a graph."""
        saved = {k: p.requires_grad for k, p in self.params.items()}
        for p in self.params.values():
            p.requires_grad = False
        try:
            return self.forward(x_t, t).data
        finally:
            for k, p in self.params.items():
                p.requires_grad = saved[k]
