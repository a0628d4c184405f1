import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uldct.engine import (
    AdamState,
    ComplexField,
    NonFiniteError,
    ShapeError,
    Tensor,
    adam_step,
    conv1x1,
    conv2d,
    fft2,
    ifft2,
    mse_loss,
    polar,
    silu,
    tsum,
    unpolar,
    upsample2x,
)
from uldct.engine import checkpoint
from uldct.engine.fft import fft2_array, ifft2_array, radix2_fft2
from uldct.engine.gradcheck import check_gradients


def naive_conv(x, w, b, stride, pad):
    B, Cin, H, W = x.shape
    Cout, _, kh, kw = w.shape
    xp = np.zeros((B, Cin, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad : pad + H, pad : pad + W] = x
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((B, Cout, Ho, Wo))
    for n in range(B):
        for o in range(Cout):
            for i in range(Ho):
                for j in range(Wo):
                    acc = b[o]
                    for c in range(Cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[n, c, i * stride + u, j * stride + v] * w[o, c, u, v]
                    out[n, o, i, j] = acc
    return out


def naive_dft2(x):
    H, W = x.shape
    out = np.zeros((H, W), dtype=complex)
    for k in range(H):
        for l in range(W):
            s = 0j
            for m in range(H):
                for n in range(W):
                    s += x[m, n] * np.exp(-2j * np.pi * (k * m / H + l * n / W))
            out[k, l] = s / math.sqrt(H * W)
    return out


# -- conv2d -----------------------------------------------------------------

def test_conv2d_ones_center():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), padding=1)
    assert out.data[0, 0, 1, 1] == 9.0


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 1, 6, 5))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(k), padding=1).data, x)


@pytest.mark.parametrize("stride,pad", [(1, 1), (1, 0), (2, 1)])
def test_conv2d_matches_loop_oracle(stride, pad):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    got = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad).data
    assert np.max(np.abs(got - naive_conv(x, w, b, stride, pad))) < 1e-12


def test_conv2d_errors():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))))


# -- conv1x1 ----------------------------------------------------------------

def test_conv1x1_identity_and_mean():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 4, 4))
    eye = np.eye(3)[:, :, None, None]
    np.testing.assert_array_equal(conv1x1(Tensor(x), Tensor(eye)).data, x)
    x2 = rng.normal(size=(1, 2, 4, 4))
    avg = conv1x1(Tensor(x2), Tensor(np.full((1, 2, 1, 1), 0.5))).data
    np.testing.assert_allclose(avg[:, 0], x2.mean(axis=1), atol=1e-15)


def test_conv1x1_matmul_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 4, 3, 5))
    w = rng.normal(size=(3, 4, 1, 1))
    flat = x.transpose(0, 2, 3, 1).reshape(-1, 4) @ w[:, :, 0, 0].T
    expected = flat.reshape(2, 3, 5, 3).transpose(0, 3, 1, 2)
    assert np.max(np.abs(conv1x1(Tensor(x), Tensor(w)).data - expected)) < 1e-12
    with pytest.raises(ShapeError):
        conv1x1(Tensor(x), Tensor(np.ones((1, 3, 1, 1))))


# -- FFT --------------------------------------------------------------------

def test_fft_constant_is_dc_only():
    spec = fft2_array(np.full((4, 4), 0.7))
    assert abs(spec[0, 0] - 0.7 * 4) < 1e-12
    spec[0, 0] = 0
    assert np.max(np.abs(spec)) < 1e-12


def test_fft_impulse_flat_matches_dft():
    x = np.zeros((8, 8))
    x[0, 0] = 1.0
    spec = fft2_array(x)
    np.testing.assert_allclose(np.abs(spec), np.full((8, 8), 1 / 8), atol=1e-12)
    np.testing.assert_allclose(spec, naive_dft2(x), atol=1e-12)


def test_fft_matches_naive_dft_random():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 8))
    np.testing.assert_allclose(fft2_array(x), naive_dft2(x), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64])
def test_fft_roundtrip_sizes(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=(2, 3, n, n))
    assert np.max(np.abs(ifft2_array(fft2_array(x)) - x)) < 1e-10


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ShapeError):
        fft2(Tensor(np.ones((1, 1, 6, 8))))


# -- polar ------------------------------------------------------------------

def test_polar_345():
    f = ComplexField(Tensor([3.0]), Tensor([4.0]))
    mag, ph = polar(f)
    assert mag.data[0] == 5.0
    assert ph.data[0] == math.atan2(4, 3)
    _, ph0 = polar(ComplexField(Tensor([2.5]), Tensor([0.0])))
    assert ph0.data[0] == 0.0


def test_polar_roundtrip():
    rng = np.random.default_rng(5)
    f = ComplexField(Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4))))
    back = unpolar(*polar(f))
    assert np.max(np.abs(back.to_complex() - f.to_complex())) < 1e-10


def test_phase_gradient_at_zero_magnitude_is_finite():
    re = Tensor(np.zeros((2, 2)), requires_grad=True)
    im = Tensor(np.zeros((2, 2)), requires_grad=True)
    mag, ph = polar(ComplexField(re, im))
    (tsum(mag) + tsum(ph)).backward()
    assert np.isfinite(re.grad).all() and np.isfinite(im.grad).all()


# -- losses, optimizer -------------------------------------------------------

def test_mse_values():
    a = np.random.default_rng(6).normal(size=(3, 4))
    assert mse_loss(Tensor(a), Tensor(a)).item() == 0.0
    assert abs(mse_loss(Tensor(a + 0.1), Tensor(a)).item() - 0.01) < 1e-15
    b = np.random.default_rng(7).normal(size=(3, 4))
    acc = 0.0
    for i in range(3):
        for j in range(4):
            acc += (a[i, j] - b[i, j]) ** 2
    assert abs(mse_loss(Tensor(a), Tensor(b)).item() - acc / 12) < 1e-12
    with pytest.raises(ShapeError):
        mse_loss(Tensor(a), Tensor(b[:2]))


def test_mse_gradient_formula():
    a = Tensor(np.array([1.0, 2.0, 4.0]), requires_grad=True)
    mse_loss(a, Tensor(np.zeros(3))).backward()
    np.testing.assert_allclose(a.grad, 2 * a.data / 3)


def scalar_adam(p, g, steps, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p = p - lr * mhat / (math.sqrt(vhat) + eps)
    return p


def test_adam_first_step():
    p = np.array([0.5])
    adam_step([p], [np.array([1.0])], AdamState.for_params([p], lr=1e-4))
    # bias-corrected first step: -lr * 1 / (1 + eps)
    assert abs((p[0] - 0.5) + 1e-4 / (1 + 1e-8)) < 1e-15


def test_adam_zero_grad_fixed_point():
    p = np.array([0.3, -1.2])
    st_ = AdamState.for_params([p])
    for _ in range(3):
        adam_step([p], [np.zeros(2)], st_)
    np.testing.assert_array_equal(p, [0.3, -1.2])


def test_adam_two_steps_vs_scalar():
    p = np.array([0.7, -0.2])
    g = np.array([0.3, -2.0])
    st_ = AdamState.for_params([p])
    adam_step([p], [g], st_)
    adam_step([p], [g], st_)
    expected = [scalar_adam(0.7, 0.3, 2), scalar_adam(-0.2, -2.0, 2)]
    assert np.max(np.abs(p - expected)) < 1e-14
    assert st_.step_count == 2


# -- autograd ---------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(8).normal(size=(2, 3)), requires_grad=True)
    tsum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_non_scalar_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])


def test_conv_mse_gradcheck():
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    y = Tensor(rng.normal(size=(1, 3, 3, 3)))
    errs = check_gradients(lambda: mse_loss(conv2d(x, w, b, stride=2, padding=1), y), [x, w, b])
    assert max(errs) < 1e-3


def test_frequency_composite_gradcheck():
    rng = np.random.default_rng(10)
    x = Tensor(rng.normal(size=(1, 2, 8, 8)), requires_grad=True)
    wm = Tensor(rng.normal(size=(2, 2, 1, 1)), requires_grad=True)
    wp = Tensor(rng.normal(size=(2, 2, 1, 1)) * 0.5, requires_grad=True)
    y = Tensor(rng.normal(size=(1, 2, 8, 8)))

    def loss():
        mag, ph = polar(fft2(x))
        return mse_loss(ifft2(unpolar(conv1x1(mag, wm), conv1x1(ph, wp))), y)

    assert max(check_gradients(loss, [x, wm, wp])) < 1e-3


def test_silu_upsample_gradcheck():
    rng = np.random.default_rng(11)
    x = Tensor(rng.normal(size=(1, 1, 3, 3)), requires_grad=True)
    y = Tensor(rng.normal(size=(1, 1, 6, 6)))
    assert max(check_gradients(lambda: mse_loss(upsample2x(silu(x)), y), [x])) < 1e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=6), st.integers(min_value=0, max_value=2**31 - 1))
def test_roundtrip_property(log_n, seed):
    n = 2**log_n
    x = np.random.default_rng(seed).normal(size=(n, n))
    assert np.max(np.abs(ifft2_array(fft2_array(x)) - x)) < 1e-10


# -- checkpoint -------------------------------------------------------------

def test_checkpoint_bit_exact(tmp_path):
    rng = np.random.default_rng(12)
    params = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=4)}
    adam = AdamState.for_params(list(params.values()), lr=3e-4)
    adam_step(list(params.values()), [rng.normal(size=(2, 3)), rng.normal(size=4)], adam)
    path = checkpoint.save(tmp_path / "c.ckpt", {"arch": "x"}, params, adam)
    assert path.read_bytes()[:8] == b"FFMCKPT1"
    desc, loaded, adam2 = checkpoint.load(path)
    assert desc["arch"] == "x"
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()
    assert adam2.step_count == 1 and adam2.lr == 3e-4
    for m1, m2 in zip(adam.m + adam.v, adam2.m + adam2.v):
        assert m1.tobytes() == m2.tobytes()
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOTACKPT" + path.read_bytes()[8:])


@pytest.mark.parametrize("shape", [(1, 1), (4, 8), (2, 3, 16, 16), (32, 2)])
def test_radix2_reference_matches_numpy_path(shape):
    rng = np.random.default_rng(len(shape))
    x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    np.testing.assert_allclose(radix2_fft2(x, inverse=False), fft2_array(x), atol=1e-12)
    np.testing.assert_allclose(radix2_fft2(x, inverse=True), ifft2_array(x), atol=1e-12)
