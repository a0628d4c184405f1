from dataclasses import dataclass

import numpy as np
import pytest

from uldct.engine import Tensor, mse_loss
from uldct.engine.checkpoint import CheckpointError
from uldct.engine.fft import is_power_of_two
from uldct.engine.gradcheck import numerical_grad, relative_error
from uldct.ffm.network import VelocityNet, VelocityNetConfig, frequency_module, sinusoidal_embedding
from uldct.ffm.sampler import SamplerConfig, euler_sample, sample_images
from uldct.ffm.train import (
    TrainConfig,
    TrainingDiverged,
    interpolate_path,
    load_checkpoint,
    save_checkpoint,
    train,
)


@dataclass
class P:
    source: np.ndarray
    label: np.ndarray


def small_net(freq=True, seed=0):
    return VelocityNet(VelocityNetConfig(base_channels=2, depth=1, time_embed_dim=4, frequency_module=freq, seed=seed))


# -- frequency module --------------------------------------------------------

def test_frequency_module_identity_and_scaling():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 3, 8, 8)))
    eye = Tensor(np.eye(3)[:, :, None, None])
    assert np.abs(frequency_module(x, eye, eye).data - x.data).max() < 1e-8
    two = Tensor(2 * np.eye(3)[:, :, None, None])
    assert np.abs(frequency_module(x, two, eye).data - 2 * x.data).max() < 1e-8
    with pytest.raises(ValueError):
        frequency_module(Tensor(np.zeros((1, 3, 6, 8))), eye, eye)


def test_frequency_module_gradients():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(1, 2, 8, 8)), requires_grad=True)
    wm = Tensor(np.eye(2)[:, :, None, None] + 0.1 * rng.normal(size=(2, 2, 1, 1)), requires_grad=True)
    wp = Tensor(np.eye(2)[:, :, None, None] + 0.1 * rng.normal(size=(2, 2, 1, 1)), requires_grad=True)
    target = Tensor(rng.normal(size=(1, 2, 8, 8)))

    def f():
        return mse_loss(frequency_module(x, wm, wp), target)

    for p in (x, wm, wp):
        for q in (x, wm, wp):
            q.zero_grad()
        f().backward()
        assert relative_error(p.grad, numerical_grad(f, p)) < 1e-3


# -- network -----------------------------------------------------------------

def test_embedding_shape_and_range():
    e = sinusoidal_embedding(np.array([0.0, 0.5, 1.0]), 32)
    assert e.shape == (3, 32) and np.abs(e).max() <= 1.0
    assert np.array_equal(e[0, :16], np.zeros(16))


@pytest.mark.parametrize("size", [8, 16, 32])
def test_forward_shape_determinism_and_time(size):
    net = VelocityNet(VelocityNetConfig(base_channels=4, depth=2, seed=3))
    x = np.random.default_rng(0).random((2, 1, size, size))
    a = net.predict(x, np.array([0.2, 0.7]))
    assert a.shape == x.shape
    again = VelocityNet(VelocityNetConfig(base_channels=4, depth=2, seed=3)).predict(x, np.array([0.2, 0.7]))
    assert np.array_equal(a, again)
    assert np.abs(net.predict(x, np.array([0.9, 0.1])) - a).max() > 0


def test_forward_rejects_bad_input():
    net = small_net()
    with pytest.raises(ValueError):
        net.predict(np.zeros((1, 2, 8, 8)), 0.5)
    with pytest.raises(ValueError):
        net.predict(np.zeros((1, 1, 9, 9)), 0.5)
    with pytest.raises(ValueError):
        net.predict(np.zeros((1, 1, 8, 8)), 1.5)


def test_config_validation():
    with pytest.raises(ValueError):
        VelocityNetConfig(base_channels=0)
    with pytest.raises(ValueError):
        VelocityNetConfig(depth=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        SamplerConfig(num_steps=0)


@pytest.mark.parametrize("freq", [True, False])
def test_full_network_gradcheck(freq):
    net = small_net(freq, seed=2)
    rng = np.random.default_rng(5)
    x = Tensor(rng.random((1, 1, 8, 8)), requires_grad=True)
    target = Tensor(rng.normal(size=(1, 1, 8, 8)))
    t = np.array([0.37])

    def f():
        return mse_loss(net(x, t), target)

    checked = [x] + [net.params[k] for k in list(net.params)[:: max(1, len(net.params) // 8)]]
    for p in checked:
        net.zero_grad()
        x.zero_grad()
        f().backward()
        assert relative_error(p.grad, numerical_grad(f, p)) < 1e-3


# -- sampler -----------------------------------------------------------------

@pytest.mark.parametrize("steps", [1, 2, 10, 37])
def test_euler_exact_velocity(steps):
    rng = np.random.default_rng(steps)
    x0 = rng.random((2, 1, 8, 8))
    x1 = np.clip(x0 + rng.normal(0, 0.2, x0.shape), 0, 1)
    out = euler_sample(x1, lambda x, t: x1 - x0, steps)
    assert np.abs(out - x0).max() < 1e-12


def test_euler_single_step_and_times():
    x1 = np.full((1, 1, 4, 4), 0.8)
    seen = []

    def v(x, t):
        seen.append(float(t[0]))
        return 0.5 * x

    out = euler_sample(x1, v, 1)
    assert np.array_equal(out, x1 - 0.5 * x1)
    seen.clear()
    euler_sample(x1, v, 4)
    assert seen == [1.0, 0.75, 0.5, 0.25]


def test_clip_only_at_end():
    x1 = np.full((1, 1, 4, 4), 0.9)
    # first step overshoots above 1, second comes back
    vel = iter([np.full_like(x1, -0.4), np.full_like(x1, 0.4)])
    out = euler_sample(x1, lambda x, t: next(vel), 2)
    assert np.allclose(out, 0.9)
    assert np.allclose(euler_sample(x1, lambda x, t: np.full_like(x, -1.0), 1), 1.0)
    assert np.allclose(euler_sample(x1, lambda x, t: np.full_like(x, -1.0), 1, clip=False), 1.9)


def test_interpolation_endpoints_exact():
    rng = np.random.default_rng(0)
    x1, x0 = rng.random((2, 1, 4, 4)), rng.random((2, 1, 4, 4))
    assert np.array_equal(interpolate_path(x1, x0, np.zeros(2)), x0)
    assert np.array_equal(interpolate_path(x1, x0, np.ones(2)), x1)


# -- training ----------------------------------------------------------------

def _images(k, seed=0, size=8):
    rng = np.random.default_rng(seed)
    return [rng.random((size, size)) for _ in range(k)]


def test_zero_velocity_dataset():
    pairs = [P(x, x) for x in _images(4)]
    res = train(pairs, TrainConfig(epochs=1, steps_per_epoch=600, lr=3e-3), small_net().cfg)
    assert min(res.losses) >= 0
    assert np.mean(res.losses[-10:]) < 1e-6
    v = res.net.predict(np.stack([p.source for p in pairs])[:, None], 0.5)
    assert np.abs(v).max() < 5e-3


def test_constant_residual_dataset():
    c = 0.3
    pairs = [P(np.clip(x, 0, 0.7) + c, np.clip(x, 0, 0.7)) for x in _images(6, seed=1)]
    cfg = VelocityNetConfig(base_channels=4, depth=1, time_embed_dim=8, seed=1)
    res = train(pairs, TrainConfig(epochs=3, steps_per_epoch=1000, lr=3e-3, batch_size=6), cfg)
    x1 = np.stack([p.source for p in pairs])[:, None]
    x0 = np.stack([p.label for p in pairs])[:, None]
    for t in (0.1, 0.5, 0.9):
        v = res.net.predict(interpolate_path(x1, x0, np.full(6, t)), t)
        assert np.abs(v - c).max() < 0.01


def test_training_deterministic():
    pairs = [P(a, b) for a, b in zip(_images(3, 2), _images(3, 3))]
    runs = [train(pairs, TrainConfig(epochs=1, steps_per_epoch=5), small_net().cfg) for _ in range(2)]
    assert runs[0].losses == runs[1].losses
    assert runs[0].loss_csv(5) == runs[1].loss_csv(5)
    assert runs[0].loss_csv(5).splitlines()[0] == "step,epoch,loss"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    pairs = [P(a, b) for a, b in zip(_images(2, 2), _images(2, 3))]
    with pytest.raises(TrainingDiverged, match="step"):
        train(pairs, TrainConfig(epochs=1, steps_per_epoch=50, lr=1e200), small_net().cfg)
    with pytest.raises(ValueError):
        train([], TrainConfig(), small_net().cfg)


def test_checkpoint_roundtrip(tmp_path):
    pairs = [P(a, b) for a, b in zip(_images(3, 4), _images(3, 5))]
    tc = TrainConfig(epochs=1, steps_per_epoch=3)
    res = train(pairs, tc, small_net().cfg)
    x = np.stack([p.source for p in pairs])[:, None]
    before = res.net.predict(x, 0.4)
    path = save_checkpoint(tmp_path / "m.ckpt", res.net, res.adam, tc)
    net, adam, desc = load_checkpoint(path)
    assert np.array_equal(net.predict(x, 0.4), before)
    assert adam.step_count == 3 and desc["train"]["steps_per_epoch"] == 3
    for a, b in zip(adam.m, res.adam.m):
        assert np.array_equal(a, b)
    assert path.read_bytes()[:8] == b"FFMCKPT1"

    blob = bytearray(path.read_bytes())
    blob[:8] = b"XXXXXXXX"
    (tmp_path / "bad.ckpt").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")


def test_sample_images_shape():
    net = small_net()
    imgs = np.stack(_images(3))
    out = sample_images(net, imgs, SamplerConfig(num_steps=2, batch_size=2))
    assert out.shape == imgs.shape and out.min() >= 0 and out.max() <= 1
    assert is_power_of_two(imgs.shape[-1])
