import math

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from uldct.metrics import (
    METRIC_NAMES,
    MetricError,
    aggregate,
    compute_metrics,
    evaluate_split,
    fsim,
    gmsd,
    means_csv,
    nqm,
    psnr,
    rmse,
    ssim,
    ssim_batch,
    table1_csv,
    vif,
)


def smooth_image(seed, n=64):
    rng = np.random.default_rng(seed)
    x = gaussian_filter(rng.random((n, n)), 3)
    return (x - x.min()) / (x.max() - x.min())


def noisy(x, sigma, seed):
    return np.clip(x + np.random.default_rng(seed).normal(0, sigma, x.shape), 0, 1)


# -- loop oracles -----------------------------------------------------------

def ssim_loop(a, b, L=1.0):
    r, sigma = 5, 1.5
    g = [math.exp(-0.5 * (i / sigma) ** 2) for i in range(-r, r + 1)]
    s = sum(g)
    g = [v / s for v in g]
    pa = np.pad(a, r, mode="symmetric")
    pb = np.pad(b, r, mode="symmetric")
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    total = 0.0
    H, W = a.shape
    for i in range(H):
        for j in range(W):
            ma = mb = saa = sbb = sab = 0.0
            for u in range(2 * r + 1):
                for v in range(2 * r + 1):
                    w = g[u] * g[v]
                    xa, xb = pa[i + u, j + v], pb[i + u, j + v]
                    ma += w * xa
                    mb += w * xb
                    saa += w * xa * xa
                    sbb += w * xb * xb
                    sab += w * xa * xb
            va, vb, cov = saa - ma * ma, sbb - mb * mb, sab - ma * mb
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    return total / (H * W)


def gmsd_loop(a, b, c=170.0 / 255.0**2):
    pa = np.pad(a, 1, mode="symmetric")
    pb = np.pad(b, 1, mode="symmetric")
    H, W = a.shape
    vals = []
    for i in range(H):
        for j in range(W):
            mags = []
            for p in (pa, pb):
                gx = sum(p[i + u, j] - p[i + u, j + 2] for u in range(3)) / 3
                gy = sum(p[i, j + v] - p[i + 2, j + v] for v in range(3)) / 3
                mags.append(math.sqrt(gx * gx + gy * gy))
            vals.append((2 * mags[0] * mags[1] + c) / (mags[0] ** 2 + mags[1] ** 2 + c))
    mean = sum(vals) / len(vals)
    return math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))


def rmse_loop(a, b):
    acc = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        acc += (x - y) ** 2
    return math.sqrt(acc / a.size)


RANDOM_PAIRS = [(np.random.default_rng(s).random((8, 8)), np.random.default_rng(s + 100).random((8, 8))) for s in range(5)]


@pytest.mark.parametrize("a,b", RANDOM_PAIRS)
def test_ssim_loop_oracle(a, b):
    assert abs(ssim(a, b) - ssim_loop(a, b)) < 1e-10


@pytest.mark.parametrize("a,b", RANDOM_PAIRS)
def test_gmsd_loop_oracle(a, b):
    assert abs(gmsd(a, b) - gmsd_loop(a, b)) < 1e-10


@pytest.mark.parametrize("a,b", RANDOM_PAIRS)
def test_rmse_psnr_loop_oracle(a, b):
    r = rmse_loop(a, b)
    assert abs(rmse(a, b) - r) < 1e-12
    assert abs(psnr(a, b) - 10 * math.log10(1.0 / (r * r))) < 1e-10


def test_ssim_constant_images_luminance_only():
    a, b = np.full((16, 16), 0.3), np.full((16, 16), 0.7)
    c1 = 0.01**2
    expected = (2 * 0.3 * 0.7 + c1) / (0.3**2 + 0.7**2 + c1)
    assert abs(ssim(a, b) - expected) < 1e-12


def test_psnr_rmse_offset():
    a = np.full((8, 8), 0.5)
    assert abs(rmse(a + 0.1, a) - 0.1) < 1e-12
    assert abs(psnr(a + 0.1, a) - 20.0) < 1e-9
    assert psnr(a, a) == 99.0 and rmse(a, a) == 0.0


def test_gmsd_edges_positive():
    a = smooth_image(1)
    b = a.copy()
    b[::8, :] = 1.0
    assert gmsd(a, a) == 0.0
    assert gmsd(a, b) > 0.0


def test_identity_all_seven():
    x = smooth_image(2)
    rep = compute_metrics(x, x)
    assert rep["SSIM"] == pytest.approx(1.0, abs=1e-12)
    assert rep["FSIM"] == pytest.approx(1.0, abs=1e-6)
    assert rep["VIF"] == pytest.approx(1.0, abs=1e-6)
    assert rep["GMSD"] == 0.0 and rep["RMSE"] == 0.0
    assert rep["PSNR"] == 99.0 and rep["NQM"] == 99.0


def test_fsim_symmetric_and_monotone():
    x = smooth_image(3)
    mild, heavy = noisy(x, 0.03, 1), noisy(x, 0.15, 1)
    assert abs(fsim(x, mild) - fsim(mild, x)) < 1e-10
    assert fsim(heavy, x) < fsim(mild, x)


def test_fsim_too_small():
    with pytest.raises(MetricError):
        fsim(np.zeros((16, 16)), np.zeros((16, 16)))


def test_vif_decreases_with_noise_and_is_rescale_invariant():
    x = smooth_image(4)
    a, b = noisy(x, 0.03, 2), noisy(x, 0.12, 2)
    assert vif(b, x) < vif(a, x) < 1.0
    assert abs(vif(0.5 * a, 0.5 * x, data_range=0.5) - vif(a, x)) < 1e-6
    assert abs(vif(a + 0.2, x + 0.2) - vif(a, x)) < 1e-6


def test_nqm_decreases_with_noise():
    x = smooth_image(5) * 0.8 + 0.1
    assert nqm(noisy(x, 0.1, 3), x) < nqm(noisy(x, 0.02, 3), x) < 99.0


def test_extent_mismatch():
    for fn in (ssim, gmsd, psnr, rmse, fsim, vif, nqm):
        with pytest.raises(MetricError):
            fn(np.zeros((32, 32)), np.zeros((32, 64)))


def test_ssim_batch_matches_single():
    a = np.stack([smooth_image(s) for s in range(3)])
    b = np.stack([noisy(x, 0.05, 7) for x in a])
    got = ssim_batch(a, b)
    for i in range(3):
        assert abs(got[i] - ssim(a[i], b[i])) < 1e-12


def test_range_invariants_random():
    rng = np.random.default_rng(9)
    for _ in range(3):
        rep = compute_metrics(rng.random((32, 32)), rng.random((32, 32)))
        assert rep.range_violations() == []


def test_evaluate_split_identity_and_oracle():
    imgs = {f"s{i}": smooth_image(i) for i in range(3)}
    agg = evaluate_split(imgs, imgs)
    assert agg.mean["SSIM"] == pytest.approx(1.0) and agg.mean["FSIM"] == pytest.approx(1.0)
    assert agg.mean["VIF"] == pytest.approx(1.0) and agg.mean["RMSE"] == 0.0 and agg.mean["GMSD"] == 0.0

    den = {k: noisy(v, 0.05, i) for i, (k, v) in enumerate(imgs.items())}
    agg = evaluate_split(den, imgs)
    for name in METRIC_NAMES:
        vals = [r.values[name] for r in agg.per_image]
        mean = sum(vals) / len(vals)
        std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
        assert abs(agg.mean[name] - mean) < 1e-12
        assert abs(agg.std[name] - std) < 1e-12


def test_evaluate_split_errors():
    with pytest.raises(ValueError):
        evaluate_split({}, {})
    with pytest.raises(KeyError):
        evaluate_split({"a": np.zeros((32, 32))}, {"b": np.zeros((32, 32))})


def test_csv_layouts():
    x = smooth_image(6)
    agg = aggregate([compute_metrics(noisy(x, 0.05, 1), x), compute_metrics(noisy(x, 0.05, 2), x)])
    lines = table1_csv({"FFM": agg}).splitlines()
    assert lines[0] == "Method,FSIM,GMSD,SSIM,VIF,NQM,PSNR,RMSE"
    assert lines[1].startswith("FFM,") and "±" in lines[1]
    lines = means_csv("Domain", {"Frequency": agg, "Image": agg}).splitlines()
    assert [l.split(",")[0] for l in lines] == ["Domain", "Frequency", "Image"]
