"""Binary checkpoint container.

Layout (all integers and floats little-endian)::

    b"FFMCKPT1"
    u64 descriptor length, descriptor bytes (UTF-8 JSON)
    f64 parameter buffers, in the order listed by descriptor["params"]
    u64 adam step_count, f64 lr, beta1, beta2, epsilon
    f64 adam first moments (same order), then second moments

The descriptor carries ``params``: a list of ``[name, shape]`` pairs, plus
whatever architecture/training metadata the caller adds.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .optim import AdamState

MAGIC = b"FFMCKPT1"


class CheckpointError(ValueError):
    pass


def dumps(descriptor: dict, params: dict[str, np.ndarray], adam: AdamState | None) -> bytes:
    desc = dict(descriptor)
    desc["params"] = [[name, list(arr.shape)] for name, arr in params.items()]
    desc["has_adam"] = adam is not None
    text = json.dumps(desc, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(text)), text]
    for arr in params.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if adam is not None:
        parts.append(struct.pack("<Q4d", adam.step_count, adam.lr, adam.beta1, adam.beta2, adam.epsilon))
        for buf in list(adam.m) + list(adam.v):
            parts.append(np.ascontiguousarray(buf, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> tuple[dict, dict[str, np.ndarray], AdamState | None]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not an FFM checkpoint (bad magic)")
    (n,) = struct.unpack_from("<Q", blob, 8)
    pos = 16
    desc = json.loads(blob[pos : pos + n].decode("utf-8"))
    pos += n

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * count
        return arr

    params = {name: take(tuple(shape)) for name, shape in desc["params"]}
    adam = None
    if desc.get("has_adam"):
        step, lr, b1, b2, eps = struct.unpack_from("<Q4d", blob, pos)
        pos += struct.calcsize("<Q4d")
        shapes = [tuple(s) for _, s in desc["params"]]
        m = [take(s) for s in shapes]
        v = [take(s) for s in shapes]
        adam = AdamState(lr=lr, beta1=b1, beta2=b2, epsilon=eps, step_count=step, m=m, v=v)
    if pos != len(blob):
        raise CheckpointError(f"trailing bytes in checkpoint ({len(blob) - pos})")
    return desc, params, adam


def save(path, descriptor: dict, params: dict[str, np.ndarray], adam: AdamState | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(descriptor, params, adam))
    return path


def load(path) -> tuple[dict, dict[str, np.ndarray], AdamState | None]:
    return loads(Path(path).read_bytes())
