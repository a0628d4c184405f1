"""Raw float32 image files with JSON sidecars and PNG previews.

An image ``stem`` is stored as three files:

* ``stem.f32``  -- little-endian float32, row-major, ``height*width`` values
* ``stem.json`` -- one line: ``{"width": W, "height": H, "role": "..."}``
* ``stem.png``  -- 8-bit grayscale preview (values clipped to [0, 1])
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def write_image(stem, img: np.ndarray, role: str, preview: bool = True) -> Path:
    """Write ``stem.f32`` (+ sidecar, + preview) and return the ``.f32`` path."""
    stem = Path(stem)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {arr.shape}")
    stem.parent.mkdir(parents=True, exist_ok=True)
    raw = stem.with_suffix(".f32")
    try:
        raw.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        sidecar = {"width": int(arr.shape[1]), "height": int(arr.shape[0]), "role": role}
        stem.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
        if preview:
            png = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
            Image.fromarray(png).save(stem.with_suffix(".png"), optimize=False)
    except OSError as exc:
        raise OSError(f"failed writing image {raw}: {exc}") from exc
    return raw


def read_image(path) -> np.ndarray:
    """Load a ``.f32`` image (shape from its sidecar) as float64."""
    raw = Path(path).with_suffix(".f32")
    try:
        meta = json.loads(raw.with_suffix(".json").read_text())
        data = np.frombuffer(raw.read_bytes(), dtype="<f4")
    except OSError as exc:
        raise OSError(f"failed reading image {raw}: {exc}") from exc
    h, w = meta["height"], meta["width"]
    if data.size != h * w:
        raise ValueError(f"{raw}: {data.size} values, sidecar says {h}x{w}")
    return data.reshape(h, w).astype(np.float64)


def quantize(img: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so in-memory values match what is stored."""
    return np.asarray(img, dtype=np.float32).astype(np.float64)
