import json

import numpy as np
import pytest

from uldct.imageio import read_image
from uldct.metrics import ssim
from uldct.phantom import (
    DatasetManifest,
    DeformationField,
    NoiseModel,
    PhantomConfig,
    apply_noise,
    build_dataset,
    deform,
    generate_phantom,
    make_sample,
    random_deformation,
    split_counts,
)


def test_phantom_deterministic_and_bounded():
    a, b = generate_phantom(7), generate_phantom(7)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert np.abs(generate_phantom(1) - generate_phantom(2)).mean() > 0.01


def test_phantom_rejects_bad_size():
    with pytest.raises(ValueError):
        generate_phantom(0, size=48)


def test_zero_field_is_identity():
    x = generate_phantom(3)
    assert np.array_equal(deform(x, DeformationField.zeros(64)), x)


def test_integer_translation_shifts():
    x = generate_phantom(4)
    out = deform(x, DeformationField.translation(64, 1.0, 0.0))
    assert np.allclose(out[:, :-1], x[:, 1:], atol=1e-12)


def test_deformation_peak_and_similarity():
    x = generate_phantom(5)
    f = random_deformation(11, 64, max_displacement=3.0)
    assert f.magnitude.max() <= 3.0 + 1e-12
    assert 0.5 < ssim(deform(x, f), x) < 1.0


def test_noiseless_limit():
    x = generate_phantom(6)
    out = apply_noise(x, NoiseModel(dose_fraction=1.0, photon_scale=1e9, electronic_sigma=0.0), seed=0)
    assert np.abs(out - x).max() < 0.01


def test_low_dose_is_heavily_degraded_and_deterministic():
    model = NoiseModel()
    scores = []
    for s in range(50):
        x = generate_phantom(s)
        scores.append(ssim(apply_noise(x, model, s), x))
    assert np.mean(scores) < 0.6
    x = generate_phantom(0)
    assert np.array_equal(apply_noise(x, model, 3), apply_noise(x, model, 3))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(dose_fraction=0.0)
    with pytest.raises(ValueError):
        NoiseModel(photon_scale=-1)


def test_split_counts():
    assert split_counts(10) == (7, 2, 1)
    assert split_counts(300) == (210, 45, 45)
    assert sum(split_counts(17)) == 17


def test_config_validation():
    with pytest.raises(ValueError):
        PhantomConfig(split=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        PhantomConfig(n=0)


def test_pairs_are_misaligned_and_noisy():
    cfg = PhantomConfig(n=12)
    for i in range(cfg.n):
        s = make_sample(cfg, i)
        assert ssim(s["moved"], s["ndct"]) < 0.99
        assert ssim(s["uldct"], s["ndct"]) < ssim(s["moved"], s["ndct"])


def test_build_dataset_roundtrip(tmp_path):
    cfg = PhantomConfig(n=10, size=32, seed=3)
    m = build_dataset(cfg, tmp_path / "a")
    assert [len(m.ids(k)) for k in ("train", "val", "test")] == [7, 2, 1]
    assert set(m.ids("train")).isdisjoint(m.ids("test"))
    sid = m.ids()[0]
    img = read_image(m.path(sid, "uldct"))
    assert np.array_equal(img, make_sample(cfg, 0)["uldct"])
    meta = json.loads(m.path(sid, "ndct").with_suffix(".json").read_text())
    assert meta == {"height": 32, "role": "ndct", "width": 32}
    assert m.path(sid, "ndct").with_suffix(".png").exists()

    again = DatasetManifest.load(tmp_path / "a" / "manifest.json")
    assert again.splits == m.splits and again.samples == m.samples

    build_dataset(cfg, tmp_path / "b")
    for sid in m.ids():
        for role in ("ndct", "moved", "uldct"):
            rel = m.samples[sid][role]
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_text() == (tmp_path / "b" / "manifest.json").read_text()
