"""2-d FFTs and the differentiable spectral ops built on them.

The training path uses ``numpy.fft`` with ``norm="ortho"``; an iterative
radix-2 transform is kept as a self-contained reference. Transforms use the
unitary convention: both directions scale by
``1/sqrt(H*W)``, so ``ifft2(fft2(x)) == x`` and Parseval holds.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor, _result

# Clamp on |f| used where the phase derivative divides by the magnitude.
MAGNITUDE_FLOOR = 1e-12


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int, sign: int) -> np.ndarray:
    half = size // 2
    return np.exp(sign * 2j * np.pi * np.arange(half) / size)


def fft_last_axis(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized DFT along the last axis (``exp(-2πi kn/N)`` forward)."""
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise ShapeError(f"FFT length must be a power of two, got {n}")
    lead = a.shape[:-1]
    out = np.asarray(a, dtype=np.complex128)[..., _bit_reversal(n)]
    sign = 1 if inverse else -1
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(size, sign)
        out = np.concatenate((even + odd, even - odd), axis=-1).reshape(*lead, n)
        size *= 2
    return out


def _check_extents(a: np.ndarray) -> None:
    h, w = a.shape[-2], a.shape[-1]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ShapeError(f"fft2 needs power-of-two extents, got {h}x{w}")


def radix2_fft2(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary 2-d transform built from :func:`fft_last_axis` (reference path)."""
    _check_extents(a)
    h, w = a.shape[-2], a.shape[-1]
    out = fft_last_axis(a, inverse)
    out = fft_last_axis(np.swapaxes(out, -1, -2), inverse)
    return np.swapaxes(out, -1, -2) / np.sqrt(h * w)


# The training loop runs on pocketfft; tests pin it to the radix-2 path.
def fft2_array(a: np.ndarray) -> np.ndarray:
    _check_extents(a)
    return np.fft.fft2(a, norm="ortho")


def ifft2_array(a: np.ndarray) -> np.ndarray:
    _check_extents(a)
    return np.fft.ifft2(a, norm="ortho")


@dataclass
class ComplexField:
    """Real and imaginary planes of a spectrum, each a differentiable Tensor."""

    real: Tensor
    imag: Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError(f"real/imag shapes differ: {self.real.shape} vs {self.imag.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.shape

    def to_complex(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data


def fft2(x: Tensor) -> ComplexField:
    """Unitary 2-d FFT over the last two axes of a real tensor."""
    spec = fft2_array(x.data)
    # d(Re F x)/dx = Re(F^H g); d(Im F x)/dx applied to g = Re(F^H (i g)).
    real = _result(spec.real.copy(), (x,), lambda g: (ifft2_array(g).real,), "fft2.real")
    imag = _result(spec.imag.copy(), (x,), lambda g: (-ifft2_array(g).imag,), "fft2.imag")
    return ComplexField(real, imag)


def ifft2(f: ComplexField) -> Tensor:
    """Inverse unitary FFT keeping the real part of the result."""
    out = ifft2_array(f.to_complex())

    def backward(g):
        spec = fft2_array(g)
        return spec.real, spec.imag

    return _result(out.real.copy(), (f.real, f.imag), backward, "ifft2")


def ifft2_residue(f: ComplexField) -> float:
    """Max |imag| discarded by :func:`ifft2`."""
    return float(np.abs(ifft2_array(f.to_complex()).imag).max())


def polar(f: ComplexField) -> tuple[Tensor, Tensor]:
    re, im = f.real.data, f.imag.data
    mag = np.hypot(re, im)
    safe = np.maximum(mag, MAGNITUDE_FLOOR)
    magnitude = _result(
        mag, (f.real, f.imag), lambda g: (g * re / safe, g * im / safe), "polar.magnitude"
    )
    sq = safe * safe
    phase = _result(
        np.arctan2(im, re), (f.real, f.imag), lambda g: (-g * im / sq, g * re / sq), "polar.phase"
    )
    return magnitude, phase


def unpolar(magnitude: Tensor, phase: Tensor) -> ComplexField:
    if magnitude.shape != phase.shape:
        raise ShapeError(f"unpolar: {magnitude.shape} vs {phase.shape}")
    m, p = magnitude.data, phase.data
    c, s = np.cos(p), np.sin(p)
    real = _result(m * c, (magnitude, phase), lambda g: (g * c, -g * m * s), "unpolar.real")
    imag = _result(m * s, (magnitude, phase), lambda g: (g * s, g * m * c), "unpolar.imag")
    return ComplexField(real, imag)
