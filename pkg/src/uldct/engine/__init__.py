"""Minimal differentiable numerics used to train the velocity network."""
from .fft import ComplexField, fft2, ifft2, ifft2_residue, polar, unpolar
from .nn import conv1x1, conv2d, linear, upsample2x
from .optim import AdamState, adam_step
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    concat,
    matmul,
    mse_loss,
    mul,
    reshape,
    silu,
    sub,
    tmean,
    tsum,
)

__all__ = [
    "AdamState",
    "ComplexField",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "concat",
    "conv1x1",
    "conv2d",
    "fft2",
    "ifft2",
    "ifft2_residue",
    "linear",
    "matmul",
    "mse_loss",
    "mul",
    "polar",
    "reshape",
    "silu",
    "sub",
    "tmean",
    "tsum",
    "unpolar",
    "upsample2x",
]
