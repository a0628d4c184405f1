"""Convolution and resampling layers for 4-d ``[B, C, H, W]`` tensors."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _result, as_tensor


def _im2col_t(xp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    """Columns laid out ``[C*kh*kw, B*ho*wo]`` (one strided slice copy per tap)."""
    b, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, b, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i : i + s * ho : s, j : j + s * wo : s].transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, b * ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded 2-d cross-correlation, implemented as im2col + matmul."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {weight.shape}")
    b, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    s, p = int(stride), int(padding)
    ho = (h + 2 * p - kh) // s + 1
    wo = (w + 2 * p - kw) // s + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv2d: kernel larger than padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = _im2col_t(xp, kh, kw, s, ho, wo)
    wmat = weight.data.reshape(cout, -1)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(cout, b, ho, wo).transpose(1, 0, 2, 3)

    def backward(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        gw = (gmat @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = _conv_input_grad(g, weight.data, xp.shape, s, p, h, w)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _result(np.ascontiguousarray(out), parents, backward, "conv2d")


def _conv_input_grad(g: np.ndarray, wt: np.ndarray, padded_shape, s: int, p: int, h: int, w: int) -> np.ndarray:
    """Input gradient of a strided conv as a full correlation with the flipped kernel."""
    b, cout, ho, wo = g.shape
    _, cin, kh, kw = wt.shape
    if s > 1:
        gd = np.zeros((b, cout, (ho - 1) * s + 1, (wo - 1) * s + 1))
        gd[:, :, ::s, ::s] = g
    else:
        gd = g
    gd = np.pad(gd, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    hd, wd = gd.shape[2] - kh + 1, gd.shape[3] - kw + 1
    cols = _im2col_t(gd, kh, kw, 1, hd, wd)
    flipped = wt[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(cin, -1)
    part = (flipped @ cols).reshape(cin, b, hd, wd).transpose(1, 0, 2, 3)
    gxp = np.zeros(padded_shape)
    gxp[:, :, :hd, :wd] = part[:, :, : padded_shape[2], : padded_shape[3]]
    return np.ascontiguousarray(gxp[:, :, p : p + h, p : p + w])


def conv1x1(x: Tensor, weight: Tensor) -> Tensor:
    """Per-pixel linear map over channels; ``weight`` is ``[C', C, 1, 1]``."""
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (1, 1):
        raise ShapeError(f"conv1x1 expects [B,C,H,W] and [C',C,1,1], got {x.shape}, {weight.shape}")
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(f"conv1x1: input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    wm = weight.data[:, :, 0, 0]
    xd = x.data

    def backward(g):
        gx = np.einsum("oc,bohw->bchw", wm, g, optimize=True)
        gw = np.einsum("bohw,bchw->oc", g, xd, optimize=True)[:, :, None, None]
        return gx, gw

    return _result(np.einsum("oc,bchw->bohw", wm, xd, optimize=True), (x, weight), backward, "conv1x1")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling over the last two axes."""
    out = x.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(g):
        *lead, h, w = g.shape
        return (g.reshape(*lead, h // 2, 2, w // 2, 2).sum(axis=(-3, -1)),)

    return _result(out, (x,), backward, "upsample2x")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape ``[B, in]``."""
    from .tensor import add, matmul, reshape

    out = matmul(x, _transpose(weight))
    if bias is not None:
        out = add(out, reshape(bias, (1, bias.shape[0])))
    return out


def _transpose(w: Tensor) -> Tensor:
    return _result(w.data.T, (w,), lambda g: (g.T,), "transpose")


__all__ = ["conv2d", "conv1x1", "upsample2x", "linear", "as_tensor"]
