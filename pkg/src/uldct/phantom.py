"""Synthetic NDCT / uLDCT pairs with motion misalignment and low-dose noise.

Each sample has a clean anatomy image (the NDCT), a smoothly warped copy
(the anatomy at the time of the second scan) and a noisy version of that
warped copy (the uLDCT). Samples are grouped into subjects: every slice of
a subject is its base anatomy under a small slice-specific warp, so
different samples of one subject resemble each other the way neighbouring
slices of one patient do.

The noise model is a stand-in. Detected counts are Poisson with mean
``photon_scale * dose_fraction * (value + floor)``; counts above
``GAUSSIAN_SWITCH`` are drawn from the moment-matched Gaussian instead.
Gaussian electronic noise is added afterwards and the result is clipped
to [0, 1].
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .engine.fft import is_power_of_two
from .imageio import quantize, write_image

GAUSSIAN_SWITCH = 30.0
SPLIT_NAMES = ("train", "val", "test")

# RNG stream tags, combined with (seed, index) into a SeedSequence.
_STREAM_ANATOMY = 1
_STREAM_MOTION = 2
_STREAM_NOISE = 3
_STREAM_SUBJECT = 4
_STREAM_SPLIT = 5


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass
class DeformationField:
    dx: np.ndarray
    dy: np.ndarray
    max_magnitude: float

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)

    @classmethod
    def zeros(cls, size: int) -> "DeformationField":
        z = np.zeros((size, size))
        return cls(z, z.copy(), 0.0)

    @classmethod
    def translation(cls, size: int, dx: float, dy: float) -> "DeformationField":
        return cls(np.full((size, size), float(dx)), np.full((size, size), float(dy)), math.hypot(dx, dy))


@dataclass
class NoiseModel:
    dose_fraction: float = 0.02
    photon_scale: float = 2000.0
    electronic_sigma: float = 0.02
    floor: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.dose_fraction <= 1.0:
            raise ValueError(f"dose_fraction must lie in (0, 1], got {self.dose_fraction}")
        if self.photon_scale <= 0:
            raise ValueError(f"photon_scale must be positive, got {self.photon_scale}")
        if self.electronic_sigma < 0:
            raise ValueError("electronic_sigma must be non-negative")


def _check_size(size: int) -> None:
    if not is_power_of_two(size) or size < 8:
        raise ValueError(f"image size must be a power of two >= 8, got {size}")


def generate_phantom(seed: int, size: int = 64) -> np.ndarray:
    """Random soft-edged ellipses over a smooth background, values in [0, 1]."""
    _check_size(size)
    rng = stream(seed, _STREAM_ANATOMY)
    y, x = np.mgrid[0:size, 0:size] / size

    img = np.full((size, size), rng.uniform(0.08, 0.18))
    for _ in range(2):
        kx, ky = rng.uniform(0.3, 1.2, size=2)
        img += rng.uniform(0.0, 0.03) * np.cos(2 * np.pi * (kx * x + ky * y) + rng.uniform(0, 2 * np.pi))

    for _ in range(int(rng.integers(5, 16))):
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        a, b = rng.uniform(0.04, 0.16, size=2)
        ang = rng.uniform(0, np.pi)
        level = rng.uniform(0.35, 0.9)
        u = (x - cx) * np.cos(ang) + (y - cy) * np.sin(ang)
        v = -(x - cx) * np.sin(ang) + (y - cy) * np.cos(ang)
        r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        # edge about one pixel wide regardless of ellipse size
        w = 1.0 / (1.0 + np.exp(-(1.0 - r) * min(a, b) * size / 0.8))
        img = img * (1.0 - w) + level * w
    return np.clip(img, 0.0, 1.0)


def random_deformation(seed: int, size: int = 64, max_displacement: float = 3.0, components: int | None = None) -> DeformationField:
    """Band-limited field: a sum of at most four low-frequency sinusoids."""
    rng = stream(seed, _STREAM_MOTION)
    if components is None:
        components = int(rng.integers(1, 5))
    if not 1 <= components <= 4:
        raise ValueError("components must be between 1 and 4")
    y, x = np.mgrid[0:size, 0:size] / size
    dx = np.zeros((size, size))
    dy = np.zeros((size, size))
    for _ in range(components):
        k = rng.uniform(0.4, 1.5)
        wave = rng.uniform(0, 2 * np.pi)
        pol = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        s = amp * np.sin(2 * np.pi * k * (x * np.cos(wave) + y * np.sin(wave)) + rng.uniform(0, 2 * np.pi))
        dx += np.cos(pol) * s
        dy += np.sin(pol) * s
    peak = float(np.hypot(dx, dy).max())
    target = max_displacement * rng.uniform(0.6, 1.0)
    scale = target / peak if peak > 0 else 0.0
    return DeformationField(dx * scale, dy * scale, float(max_displacement))


def deform(img: np.ndarray, field: DeformationField) -> np.ndarray:
    """Bilinear backward warp: ``out(y, x) = img(y + dy, x + dx)``, border replicated."""
    img = np.asarray(img, dtype=np.float64)
    if field.dx.shape != img.shape or field.dy.shape != img.shape:
        raise ValueError("deformation field and image extents differ")
    if not np.any(field.dx) and not np.any(field.dy):
        return img.copy()
    rows, cols = np.mgrid[0 : img.shape[0], 0 : img.shape[1]].astype(np.float64)
    coords = np.stack([rows + field.dy, cols + field.dx])
    return map_coordinates(img, coords, order=1, mode="nearest")


def apply_noise(img: np.ndarray, model: NoiseModel, seed: int) -> np.ndarray:
    """Signal-dependent counting noise plus electronic noise, clipped to [0, 1]."""
    rng = stream(seed, _STREAM_NOISE)
    img = np.asarray(img, dtype=np.float64)
    scale = model.photon_scale * model.dose_fraction
    lam = scale * (img + model.floor)
    counts = np.empty_like(lam)
    low = lam <= GAUSSIAN_SWITCH
    counts[low] = rng.poisson(lam[low])
    high = ~low
    counts[high] = lam[high] + np.sqrt(lam[high]) * rng.standard_normal(int(high.sum()))
    out = counts / scale - model.floor
    if model.electronic_sigma > 0:
        out = out + model.electronic_sigma * rng.standard_normal(img.shape)
    return np.clip(out, 0.0, 1.0)


# -- dataset ---------------------------------------------------------------

@dataclass
class PhantomConfig:
    n: int = 300
    size: int = 64
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    subjects: int | None = 6
    slice_variation: float = 2.0
    max_displacement: float = 3.0
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if isinstance(self.noise, dict):
            self.noise = NoiseModel(**self.noise)
        self.split = tuple(float(s) for s in self.split)
        _check_size(self.size)
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(self.split) != 3 or any(s < 0 for s in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split must be three non-negative fractions summing to 1, got {self.split}")
        if self.subjects is not None and self.subjects < 1:
            raise ValueError("subjects must be positive or None")


def split_counts(n: int, split=(0.7, 0.15, 0.15)) -> tuple[int, int, int]:
    """Round train and val half-up; test takes the remainder."""
    train = int(math.floor(n * split[0] + 0.5))
    val = min(n - train, int(math.floor(n * split[1] + 0.5)))
    return train, val, n - train - val


def assign_splits(n: int, split, seed: int) -> dict[str, list[int]]:
    counts = split_counts(n, split)
    order = stream(seed, _STREAM_SPLIT).permutation(n)
    out, start = {}, 0
    for name, c in zip(SPLIT_NAMES, counts):
        out[name] = sorted(int(i) for i in order[start : start + c])
        start += c
    return out


def make_sample(cfg: PhantomConfig, index: int) -> dict[str, np.ndarray]:
    """Images of one sample: ``ndct``, ``moved`` (noiseless warped) and ``uldct``.

    Everything is rounded through float32, matching what lands on disk.
    """
    if cfg.subjects is None:
        anatomy = generate_phantom(int(stream(cfg.seed, _STREAM_ANATOMY, index).integers(2**31)), cfg.size)
    else:
        subject = index % cfg.subjects
        base = generate_phantom(int(stream(cfg.seed, _STREAM_SUBJECT, subject).integers(2**31)), cfg.size)
        slice_seed = int(stream(cfg.seed, _STREAM_SUBJECT, subject, index).integers(2**31))
        anatomy = deform(base, random_deformation(slice_seed, cfg.size, cfg.slice_variation))
    ndct = quantize(anatomy)
    motion = random_deformation(int(stream(cfg.seed, _STREAM_MOTION, index).integers(2**31)), cfg.size, cfg.max_displacement)
    moved = deform(ndct, motion)
    uldct = apply_noise(moved, cfg.noise, int(stream(cfg.seed, _STREAM_NOISE, index).integers(2**31)))
    return {"ndct": ndct, "moved": quantize(moved), "uldct": quantize(uldct)}


@dataclass
class DatasetManifest:
    root: Path
    config: dict
    splits: dict[str, list[str]]
    samples: dict[str, dict[str, str]]

    def path(self, sample_id: str, role: str) -> Path:
        return self.root / self.samples[sample_id][role]

    def ids(self, split: str | None = None) -> list[str]:
        if split is None:
            return sorted(self.samples)
        return list(self.splits[split])

    def validate(self) -> None:
        seen: set[str] = set()
        for name, ids in self.splits.items():
            overlap = seen.intersection(ids)
            if overlap:
                raise ValueError(f"split {name} overlaps earlier splits: {sorted(overlap)[:3]}")
            seen.update(ids)
        for sid, files in self.samples.items():
            for role, rel in files.items():
                if not (self.root / rel).exists():
                    raise FileNotFoundError(f"manifest references missing file {self.root / rel}")

    def to_json(self) -> str:
        doc = {"config": self.config, "splits": self.splits, "samples": self.samples}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / "manifest.json"
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        return cls(path.parent, doc["config"], doc["splits"], doc["samples"])


def sample_id(index: int) -> str:
    return f"s{index:05d}"


def build_dataset(cfg: PhantomConfig, out_dir) -> DatasetManifest:
    """Write every sample under ``out_dir/samples`` and the manifest at ``out_dir/manifest.json``."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    samples: dict[str, dict[str, str]] = {}
    for i in range(cfg.n):
        sid = sample_id(i)
        files = {}
        for role, img in make_sample(cfg, i).items():
            rel = Path("samples") / sid / role
            write_image(root / rel, img, role)
            files[role] = str(rel.with_suffix(".f32"))
        samples[sid] = files
    splits = {k: [sample_id(i) for i in v] for k, v in assign_splits(cfg.n, cfg.split, cfg.seed).items()}
    config = asdict(cfg)
    config["split"] = list(cfg.split)
    manifest = DatasetManifest(root, config, splits, samples)
    manifest.save()
    manifest.validate()
    return manifest
