import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radar_hr.net.layers import ReLU
from radar_hr.net.model import Forward, PulseNet, bpm_to_bin, prepare_input
from radar_hr.train import (
    Adam,
    DivergenceError,
    LabelError,
    TrainConfig,
    TrainingSet,
    label_spectrum,
    label_waveform,
    loss_and_output_grads,
    loss_value,
    train,
)

MINI_SPECS = [
    {"name": "branch1", "type": "resnet", "in": 1, "filters": 2, "kernel": 3, "shared": True},
    {"name": "sum", "type": "sum"},
    {"name": "post", "type": "resnet", "in": 2, "filters": 2, "kernel": 3},
    {"name": "pulse_out", "type": "conv", "in": 2, "filters": 1, "kernel": 3},
    {"name": "spec_pre", "type": "resnet", "in": 1, "filters": 1, "kernel": 3},
    {"name": "fft_bank", "type": "fft_bank"},
    {"name": "spec1", "type": "resnet", "in": 7, "filters": 3, "kernel": 3},
    {"name": "logits", "type": "conv", "in": 3, "filters": 1, "kernel": 1},
    {"name": "softmax", "type": "softmax"},
]


def _toy_set(n, length, seed, id_offset=0):
    rng = np.random.default_rng(seed)
    x = prepare_input(rng.standard_normal((n, 16, length))).astype(np.float32)
    bpm = rng.uniform(50, 110, n)
    lp = np.stack([label_waveform(np.arange(0.3, length / 15, 60 / b), length) for b in bpm])
    ls = np.stack([label_spectrum(b) for b in bpm])
    return TrainingSet(x, lp.astype(np.float32), ls, bpm, np.arange(n) + id_offset,
                       np.full(n, length / 15))


# ---------------------------------------------------------------- labels

def test_label_waveform_without_beats_is_zero():
    np.testing.assert_array_equal(label_waveform([], 900), 0.0)


def test_label_waveform_single_beat():
    w = label_waveform([30.0], 900)
    assert w.argmax() == 450 and w.max() == 1.0
    assert w.min() >= 0
    # sigma 50 ms: one sample (66.7 ms) away the pulse is exp(-0.5 * (4/3)^2)
    assert w[451] == pytest.approx(math.exp(-0.5 * (1 / 15 / 0.05) ** 2))


def test_label_waveform_periodic_beats_autocorrelation():
    w = label_waveform(np.arange(0.5, 60, 1.0), 900)
    peaks = np.flatnonzero((w[1:-1] > w[:-2]) & (w[1:-1] >= w[2:]))
    assert peaks.size == 60
    wc = w - w.mean()
    ac = np.correlate(wc, wc, "full")[899:]
    assert 5 + np.argmax(ac[5:40]) == 15


def test_label_spectrum_at_bin_center_is_symmetric():
    bpm = (40 + 70) * 0.87890625
    p = label_spectrum(bpm)
    assert p.argmax() == 70
    np.testing.assert_allclose(p[70 - 10:70], p[71:81][::-1], rtol=1e-12)


def test_label_spectrum_normalized_for_random_bpm():
    rng = np.random.default_rng(0)
    for bpm in rng.uniform(35.2, 200.4, 1000):
        assert abs(label_spectrum(bpm).sum() - 1) < 1e-9


def test_label_spectrum_sixty_bpm_is_bin_28():
    assert label_spectrum(60.0).argmax() == round(60 / 0.87891 - 40) == 28


@pytest.mark.parametrize("bpm", [20.0, 250.0])
def test_label_spectrum_out_of_band(bpm):
    with pytest.raises(LabelError):
        label_spectrum(bpm)


# ---------------------------------------------------------------- loss

def _loop_loss(pp, pr, lp, ls, lam):
    total = 0.0
    for b in range(len(pp)):
        mse = sum((pp[b][i] - lp[b][i]) ** 2 for i in range(len(pp[b]))) / len(pp[b])
        ce = -sum(ls[b][k] * math.log(pr[b][k] + 1e-12) for k in range(len(ls[b])))
        total += mse + lam * ce
    return total / len(pp)


def test_loss_matches_scalar_loop_oracle():
    rng = np.random.default_rng(1)
    pp, lp = rng.standard_normal((3, 50)), rng.random((3, 50))
    pr = rng.dirichlet(np.ones(189), 3)
    ls = rng.dirichlet(np.ones(189), 3)
    assert loss_value(pp, pr, lp, ls, 0.7) == pytest.approx(_loop_loss(pp, pr, lp, ls, 0.7),
                                                            abs=1e-7)


def test_loss_at_label_is_label_entropy():
    ls = label_spectrum(72.0)
    lp = label_waveform([1.0, 2.0], 60)
    entropy = -np.sum(ls * np.log(ls + 1e-12))
    assert loss_value(lp, ls, lp, ls) == pytest.approx(entropy, abs=1e-9)


def test_uniform_prediction_one_hot_label():
    onehot = np.zeros(189)
    onehot[40] = 1
    assert loss_value(np.zeros(10), np.full(189, 1 / 189), np.zeros(10), onehot) == pytest.approx(
        math.log(189))


def test_zero_loss_point_has_zero_output_gradient():
    ls = np.stack([label_spectrum(60.0), label_spectrum(130.0)])
    lp = np.stack([label_waveform([1.0], 30), label_waveform([0.5], 30)])
    fwd = Forward(lp, np.log(ls + 1e-300), ls)
    _, dpulse, dlogits, mse, _ = loss_and_output_grads(fwd, lp, ls)
    assert mse == 0
    assert np.abs(dpulse).max() == 0
    assert np.abs(dlogits).max() < 1e-10


# ---------------------------------------------------------------- gradients

@pytest.fixture
def frozen_relu(monkeypatch):
    """ReLU masks fixed at their first evaluation.

    Finite differences through thousands of ReLUs almost always straddle a
    kink somewhere; with the activation pattern frozen the network is
    smooth and has the same gradient at the base point.
    """
    original = ReLU.forward

    def forward(self, params, x, train=False):
        if getattr(self, "_frozen", None) is None:
            original(self, params, x, train)
            self._frozen = self._mask
        self._mask = self._frozen
        return x * self._mask

    monkeypatch.setattr(ReLU, "forward", forward)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_full_network_loss_gradient_matches_finite_differences(seed, frozen_relu):
    net = PulseNet(MINI_SPECS, input_length=24, seed=seed, dtype=np.float64)
    data = _toy_set(2, 24, seed + 10)
    x, lp, ls = data.x.astype(np.float64), data.label_pulse.astype(np.float64), data.label_spectrum

    def loss():
        return loss_and_output_grads(net.forward(x, train=True), lp, ls, 0.5)[0]

    _, dp, dl, _, _ = loss_and_output_grads(net.forward(x, train=True), lp, ls, 0.5)
    grads = net.backward(dp, dl)
    h = 1e-5
    for key in net.trainable_keys():
        arr = net.params[key]
        num = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + h
            up = loss()
            arr[i] = old - h
            down = loss()
            arr[i] = old
            num[i] = (up - down) / (2 * h)
        den = max(np.linalg.norm(num), np.linalg.norm(grads[key]), 1e-5)
        assert np.linalg.norm(num - grads[key]) / den < 1e-4, key


def test_backward_is_linear_in_the_upstream_gradient():
    net = PulseNet(MINI_SPECS, input_length=24, seed=2, dtype=np.float64)
    data = _toy_set(2, 24, 3)
    rng = np.random.default_rng(4)
    dp, dl = rng.standard_normal((2, 24)), rng.standard_normal((2, 189))
    net.forward(data.x, train=True)
    g1 = net.backward(dp, dl)
    net.forward(data.x, train=True)
    g3 = net.backward(3.0 * dp, 3.0 * dl)
    for k in g1:
        np.testing.assert_allclose(g3[k], 3.0 * g1[k], rtol=1e-10, atol=1e-12)


def test_moving_statistics_change_only_in_training():
    net = PulseNet(MINI_SPECS, input_length=24, seed=2)
    x = _toy_set(2, 24, 5).x
    before = {k: v.copy() for k, v in net.params.items()}
    a = net.forward(x, train=False).probs
    b = net.forward(x, train=False).probs
    np.testing.assert_array_equal(a, b)
    assert all(np.array_equal(before[k], net.params[k]) for k in before)
    net.forward(x, train=True)
    assert not np.array_equal(before["post.bn1.moving_mean"], net.params["post.bn1.moving_mean"])


# ---------------------------------------------------------------- optimizer and loop

def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -2.0, 0.5])}
    opt = Adam(["w"], params, lr=0.01)
    opt.step(params, {"w": np.array([3.0, -0.1, 0.0])})
    np.testing.assert_allclose(params["w"], [0.99, -1.99, 0.5], atol=1e-9)
    assert opt.m["w"].shape == params["w"].shape == opt.v["w"].shape


def test_training_is_deterministic():
    tr, va = _toy_set(12, 64, 6), _toy_set(4, 64, 7, id_offset=100)
    cfg = TrainConfig(epochs=2, batch_size=4, seed=5)
    a, _ = train(tr, va, cfg)
    b, _ = train(tr, va, cfg)
    assert a.to_bytes() == b.to_bytes()


def test_single_example_overfits(tmp_path):
    tr = _toy_set(1, 120, 8)
    va = _toy_set(1, 120, 9, id_offset=10)
    log = tmp_path / "train.jsonl"
    _, records = train(tr, va, TrainConfig(epochs=15, patience=15, batch_size=1),
                       log_path=log)
    losses = [r["train_loss"] for r in records]
    assert all(b < a for a, b in zip(losses[3:], losses[4:])), losses
    assert len(log.read_text().splitlines()) == 15


def test_overlapping_scenes_are_rejected():
    tr = _toy_set(4, 64, 1)
    with pytest.raises(ValueError):
        train(tr, tr, TrainConfig(epochs=1))


def test_divergence_aborts():
    tr, va = _toy_set(4, 64, 1), _toy_set(2, 64, 2, id_offset=50)
    tr.x[0, 0, 0] = np.nan
    with pytest.raises(DivergenceError):
        train(tr, va, TrainConfig(epochs=1, batch_size=4))


@settings(max_examples=25, deadline=None)
@given(st.floats(35.2, 200.4))
def test_label_spectrum_peaks_at_nearest_bin(bpm):
    assert label_spectrum(bpm).argmax() == int(np.clip(np.round(bpm_to_bin(bpm)), 0, 188))
