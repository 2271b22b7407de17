"""Labels, losses, gradients and the Adam training loop for the pulse network."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from radar_hr.net.model import (
    BPM_PER_BIN,
    ModelManifest,
    PulseNet,
    bin_to_bpm,
    bpm_to_bin,
    default_layer_specs,
    pick_hr,
    PseudoSpectrum,
)

log = logging.getLogger(__name__)

LABEL_PULSE_SIGMA = 0.05
LABEL_SPECTRUM_SIGMA_BINS = 1.5
CE_EPS = 1e-12


class LabelError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# labels

def label_waveform(beat_times, length: int, rate: float = 15.0, t0: float = 0.0,
                   sigma: float = LABEL_PULSE_SIGMA) -> np.ndarray:
    """Train of unit-peak Gaussians (sigma 50 ms) at the beat times, sampled at ``t0 + n/rate``."""
    t = t0 + np.arange(length) / rate
    out = np.zeros(length)
    for tb in beat_times:
        lo, hi = np.searchsorted(t, [tb - 8 * sigma, tb + 8 * sigma])
        if hi > lo:
            u = (t[lo:hi] - tb) / sigma
            out[lo:hi] += np.exp(-0.5 * u * u)
    return out


def label_spectrum(bpm: float, sigma_bins: float = LABEL_SPECTRUM_SIGMA_BINS) -> np.ndarray:
    """Gaussian bump over the 189 cropped bins centred on ``bpm``, summing to one."""
    center = float(bpm_to_bin(bpm))
    if not -0.5 <= center <= 188.5:
        raise LabelError(f"{bpm} bpm lies outside the {bin_to_bpm(0):.2f}-{bin_to_bpm(188):.2f} band")
    k = np.arange(189)
    p = np.exp(-0.5 * ((k - center) / sigma_bins) ** 2)
    return p / p.sum()


# --------------------------------------------------------------------------
# loss

def loss_value(pred_pulse, pred_probs, label_pulse, label_spec, lam: float = 1.0) -> float:
    """Batch-mean of ``MSE(pulse) + lam * CE(spectrum)``."""
    pred_pulse = np.atleast_2d(pred_pulse)
    label_pulse = np.atleast_2d(label_pulse)
    mse = np.mean((pred_pulse - label_pulse) ** 2, axis=-1)
    ce = -np.sum(np.atleast_2d(label_spec) * np.log(np.atleast_2d(pred_probs) + CE_EPS), axis=-1)
    return float(np.mean(mse + lam * ce))


def loss_and_output_grads(fwd, label_pulse, label_spec, lam: float = 1.0):
    """Loss plus its gradients with respect to the pulse output and the logits."""
    pulse = fwd.pulse.astype(float)
    probs = fwd.probs.astype(float)
    b, t = pulse.shape
    diff = pulse - label_pulse
    mse = np.mean(diff**2, axis=-1)
    ce = -np.sum(label_spec * np.log(probs + CE_EPS), axis=-1)
    loss = float(np.mean(mse + lam * ce))
    dpulse = 2.0 * diff / (t * b)
    dprobs = -lam * label_spec / (probs + CE_EPS) / b
    dlogits = probs * (dprobs - np.sum(probs * dprobs, axis=-1, keepdims=True))
    return loss, dpulse, dlogits, float(np.mean(mse)), float(np.mean(ce))


def backward(net: PulseNet, x: np.ndarray, label_pulse: np.ndarray, label_spec: np.ndarray,
             lam: float = 1.0, train: bool = True):
    """Forward in training mode, then exact reverse mode.  Returns ``(loss, grads)``."""
    fwd = net.forward(x, train=train)
    loss, dpulse, dlogits, _, _ = loss_and_output_grads(fwd, label_pulse, label_spec, lam)
    return loss, net.backward(dpulse, dlogits)


# --------------------------------------------------------------------------
# optimizer

@dataclass
class TrainState:
    params: dict
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    seed: int = 0


class Adam:
    def __init__(self, keys, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(params[k]) for k in keys}
        self.v = {k: np.zeros_like(params[k]) for k in keys}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k in self.m:
            g = grads[k]
            self.m[k] *= b1
            self.m[k] += (1 - b1) * g
            self.v[k] *= b2
            self.v[k] += (1 - b2) * g * g
            params[k] -= (self.lr * corr * self.m[k] / (np.sqrt(self.v[k]) + self.eps)).astype(
                params[k].dtype)


# --------------------------------------------------------------------------
# data

@dataclass
class TrainingSet:
    """Stacked examples: inputs ``(N, 16, T)`` normalized, labels and metadata."""

    x: np.ndarray
    label_pulse: np.ndarray
    label_spectrum: np.ndarray
    bpm: np.ndarray
    scene_ids: np.ndarray
    window_ends: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.x[idx], self.label_pulse[idx], self.label_spectrum[idx],
                           self.bpm[idx], self.scene_ids[idx],
                           self.window_ends[idx] if self.window_ends.size else self.window_ends)

    @classmethod
    def concat(cls, sets) -> "TrainingSet":
        sets = list(sets)
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                     ("x", "label_pulse", "label_spectrum", "bpm", "scene_ids", "window_ends")))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    lam: float = 1.0
    seed: int = 0
    theta_conf: float = 1.2
    schedule: str = "constant"  # or "cosine": decay to lr * final_lr_fraction at the last epoch
    final_lr_fraction: float = 0.05

    def epoch_lr(self, epoch: int) -> float:
        if self.schedule == "constant":
            return self.lr
        if self.schedule == "cosine":
            frac = epoch / max(self.epochs - 1, 1)
            f = self.final_lr_fraction
            return self.lr * (f + (1 - f) * 0.5 * (1 + math.cos(math.pi * frac)))
        raise ValueError(f"unknown schedule {self.schedule!r}")


def evaluate(net: PulseNet, data: TrainingSet, lam: float = 1.0, batch_size: int = 64,
             theta_conf: float = 1.2) -> dict:
    """Inference-mode loss terms and HR error summary on ``data``."""
    mses, ces, preds, confs = [], [], [], []
    for i in range(0, len(data), batch_size):
        sl = slice(i, i + batch_size)
        fwd = net.forward(data.x[sl], train=False)
        _, _, _, mse, ce = loss_and_output_grads(fwd, data.label_pulse[sl],
                                                 data.label_spectrum[sl], lam)
        n = fwd.pulse.shape[0]
        mses.append(mse * n)
        ces.append(ce * n)
        for p in fwd.probs:
            est = pick_hr(PseudoSpectrum(p.astype(float)), theta_conf=theta_conf)
            preds.append(est.bpm)
            confs.append(est.confidence)
    preds, confs = np.array(preds), np.array(confs)
    err = np.abs(preds - data.bpm)
    keep = confs >= theta_conf
    return {
        "mse": float(np.sum(mses) / len(data)),
        "ce": float(np.sum(ces) / len(data)),
        "mae": float(err.mean()),
        "mae_confident": float(err[keep].mean()) if keep.any() else float("nan"),
        "recall": float(keep.mean()),
        "pred": preds,
        "confidence": confs,
    }


def train(train_set: TrainingSet, val_set: TrainingSet, config: TrainConfig = TrainConfig(),
          layer_specs: list[dict] | None = None, profile: str = "sleep", log_path=None,
          net: PulseNet | None = None) -> tuple[ModelManifest, list[dict]]:
    """Adam training with seeded shuffling; returns the best-validation manifest and the log.

    Validation uses the spectral cross-entropy; training stops after
    ``patience`` epochs without improvement.
    """
    if len(train_set) == 0:
        raise ValueError("empty training corpus")
    overlap = set(np.unique(train_set.scene_ids)) & set(np.unique(val_set.scene_ids))
    if overlap:
        raise ValueError(f"train/validation scenes overlap: {sorted(overlap)[:5]}")
    input_length = train_set.x.shape[-1]
    net = net or PulseNet(layer_specs or default_layer_specs(), input_length, seed=config.seed)
    opt = Adam(net.trainable_keys(), net.params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    best = (np.inf, {k: v.copy() for k, v in net.params.items()}, -1)
    records = []
    stale = 0
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.epochs):
            opt.lr = config.epoch_lr(epoch)
            order = rng.permutation(len(train_set))
            tot, count = 0.0, 0
            for i in range(0, len(order), config.batch_size):
                idx = np.sort(order[i:i + config.batch_size])
                loss, grads = backward(net, train_set.x[idx], train_set.label_pulse[idx],
                                       train_set.label_spectrum[idx], config.lam)
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {i}")
                opt.step(net.params, grads)
                tot += loss * len(idx)
                count += len(idx)
            rec = {"epoch": epoch, "lr": opt.lr, "train_loss": tot / count}
            if len(val_set):
                ev = evaluate(net, val_set, config.lam, theta_conf=config.theta_conf)
                rec.update(val_loss=ev["mse"] + config.lam * ev["ce"], val_ce=ev["ce"],
                           val_mae=ev["mae"], val_recall=ev["recall"])
                score = ev["ce"]
            else:
                score = rec["train_loss"]
            records.append(rec)
            log.info("epoch %d %s", epoch, json.dumps({k: round(v, 5) for k, v in rec.items()}))
            if fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                fh.flush()
            if score < best[0]:
                best = (score, {k: v.copy() for k, v in net.params.items()}, epoch)
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    finally:
        if fh:
            fh.close()
    net.params = best[1]
    meta = {"train_config": asdict(config), "best_epoch": best[2], "best_score": best[0],
            "n_train": len(train_set), "n_val": len(val_set), "bpm_per_bin": BPM_PER_BIN}
    return ModelManifest.from_net(net, profile, meta), records
