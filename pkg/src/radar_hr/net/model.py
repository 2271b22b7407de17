"""Two-block pulse network: 16 shared-weight branches -> pulse waveform -> pseudo-spectrum."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from radar_hr.net.layers import (
    CROP_START,
    CROP_STOP,
    BranchSum,
    Conv1D,
    FFTBank,
    Layer,
    ResNetLayer,
    ShapeError,
    segment_bounds,
    softmax,
)

N_BRANCHES = 16
SAMPLE_RATE = 15.0
MANIFEST_MAGIC = b"RVSM"
MANIFEST_VERSION = 1
INPUT_LENGTHS = {"sleep": 900, "meditation": 240}


def default_layer_specs() -> list[dict]:
    """Layer list of the default network.

    Branch ResNets use 4/8/8 filters so the sixteen 900-sample branches stay
    cheap; most parameters sit in the 189-bin spectrum head.
    """
    return [
        {"name": "branch1", "type": "resnet", "block": "waveform", "shared": True,
         "in": 1, "filters": 4, "kernel": 7, "stride": 1},
        {"name": "branch2", "type": "resnet", "block": "waveform", "shared": True,
         "in": 4, "filters": 8, "kernel": 5, "stride": 1},
        {"name": "branch3", "type": "resnet", "block": "waveform", "shared": True,
         "in": 8, "filters": 8, "kernel": 3, "stride": 1},
        {"name": "sum", "type": "sum", "block": "waveform"},
        {"name": "post", "type": "resnet", "block": "waveform",
         "in": 8, "filters": 8, "kernel": 5, "stride": 1},
        {"name": "pulse_out", "type": "conv", "block": "waveform",
         "in": 8, "filters": 1, "kernel": 3, "stride": 1},
        {"name": "spec_pre", "type": "resnet", "block": "spectrum",
         "in": 1, "filters": 1, "kernel": 7, "stride": 1},
        {"name": "fft_bank", "type": "fft_bank", "block": "spectrum"},
        {"name": "spec1", "type": "resnet", "block": "spectrum",
         "in": 7, "filters": 40, "kernel": 5, "stride": 1},
        {"name": "spec2", "type": "resnet", "block": "spectrum",
         "in": 40, "filters": 24, "kernel": 3, "stride": 1},
        {"name": "logits", "type": "conv", "block": "spectrum",
         "in": 24, "filters": 1, "kernel": 1, "stride": 1},
        {"name": "softmax", "type": "softmax", "block": "spectrum"},
    ]


def _build_layer(spec: dict, input_length: int) -> Layer | None:
    kind = spec["type"]
    if spec.get("stride", 1) != 1:
        raise ValueError("only stride 1 is supported")
    if kind == "resnet":
        return ResNetLayer(spec["name"], spec["in"], spec["filters"], spec["kernel"])
    if kind == "conv":
        return Conv1D(spec["name"], spec["in"], spec["filters"], spec["kernel"])
    if kind == "sum":
        return BranchSum(N_BRANCHES, spec["name"])
    if kind == "fft_bank":
        return FFTBank(input_length, spec["name"])
    if kind == "softmax":
        return None
    raise ValueError(f"unknown layer type {kind!r}")


@dataclass
class Forward:
    pulse: np.ndarray      # (B, T)
    logits: np.ndarray     # (B, 189)
    probs: np.ndarray      # (B, 189)


class PulseNet:
    """Sequential network built from layer specs; parameters live in ``self.params``."""

    def __init__(self, layer_specs: list[dict] | None = None, input_length: int = 900,
                 params: dict | None = None, seed: int = 0, dtype=np.float32):
        self.layer_specs = [dict(s) for s in (layer_specs or default_layer_specs())]
        self.input_length = input_length
        self.dtype = np.dtype(dtype)
        self.layers = [(s, _build_layer(s, input_length)) for s in self.layer_specs]
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for _, layer in self.layers:
                if layer is not None:
                    params.update(layer.init(rng))
            # the branch sum multiplies the pulse scale by the branch count
            if "pulse_out.w" in params:
                params["pulse_out.w"] = params["pulse_out.w"] / N_BRANCHES
        self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}
        expected = self.param_shapes()
        if set(expected) != set(self.params):
            raise ShapeError("parameter names do not match the layer specs")
        for k, (shape, _) in expected.items():
            if self.params[k].shape != shape:
                raise ShapeError(f"{k}: shape {self.params[k].shape} != {shape}")

    def param_shapes(self) -> dict[str, tuple[tuple[int, ...], bool]]:
        out = {}
        for _, layer in self.layers:
            if layer is not None:
                out.update(layer.param_shapes())
        return out

    def trainable_keys(self) -> list[str]:
        return [k for k, (_, t) in self.param_shapes().items() if t]

    @property
    def total_params(self) -> int:
        return int(sum(np.prod(s) for s, _ in self.param_shapes().values()))

    @property
    def trainable_params(self) -> int:
        return int(sum(np.prod(s) for s, t in self.param_shapes().values() if t))

    def astype(self, dtype) -> "PulseNet":
        return PulseNet(self.layer_specs, self.input_length,
                        {k: v.copy() for k, v in self.params.items()}, dtype=dtype)

    # ------------------------------------------------------------------
    def forward(self, x: np.ndarray, train: bool = False) -> Forward:
        """``x``: normalized micro-motions ``(B, 16, T)``."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != N_BRANCHES or x.shape[2] != self.input_length:
            raise ShapeError(
                f"expected (B, {N_BRANCHES}, {self.input_length}) micro-motions, got {x.shape}"
            )
        b = x.shape[0]
        h = x.reshape(b * N_BRANCHES, 1, self.input_length)
        pulse = None
        logits = None
        for spec, layer in self.layers:
            if layer is None:
                logits = h[:, 0, :]
                continue
            h = layer.forward(self.params, h, train)
            if spec["name"] == "pulse_out":
                pulse = h[:, 0, :]
        probs = softmax(logits)
        self._batch = b
        return Forward(pulse, logits, probs)

    def backward(self, dpulse: np.ndarray, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Reverse pass after :meth:`forward`; returns gradients of trainable parameters."""
        grads: dict[str, np.ndarray] = {}
        d = None
        for spec, layer in reversed(self.layers):
            if layer is None:
                d = dlogits[:, None, :].astype(self.dtype)
                continue
            if spec["name"] == "pulse_out":
                d = d + dpulse[:, None, :].astype(self.dtype)
            d = layer.backward(self.params, grads, d)
        for k in self.trainable_keys():
            grads.setdefault(k, np.zeros_like(self.params[k]))
        return grads


# --------------------------------------------------------------------------
# input preparation and output decoding

def prepare_input(waveforms: np.ndarray) -> np.ndarray:
    """Per-waveform standard-deviation normalization (zero-variance rows stay zero)."""
    w = np.asarray(waveforms, dtype=float)
    w = w - w.mean(axis=-1, keepdims=True)
    sd = w.std(axis=-1, keepdims=True)
    return np.divide(w, sd, out=np.zeros_like(w), where=sd > 0)


BPM_PER_BIN = SAMPLE_RATE * 60.0 / 1024
CROP_FIRST_BIN = 40


def bin_to_bpm(k) -> np.ndarray | float:
    return (CROP_FIRST_BIN + np.asarray(k)) * BPM_PER_BIN


def bpm_to_bin(bpm) -> np.ndarray | float:
    """Fractional cropped-bin coordinate of ``bpm``."""
    return np.asarray(bpm) / BPM_PER_BIN - CROP_FIRST_BIN


BPM_MIN = float(bin_to_bpm(0))
BPM_MAX = float(bin_to_bpm(188))


class UnsupportedRateError(ValueError):
    pass


def fft_bank(pulse: np.ndarray, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Magnitudes of the full, half and quarter-segment 1024-point FFTs, cropped to 189 bins."""
    if abs(sample_rate - SAMPLE_RATE) > 1e-9:
        raise UnsupportedRateError(f"fft bank is defined for {SAMPLE_RATE} Hz input")
    pulse = np.asarray(pulse, dtype=float)
    if pulse.ndim != 1 or pulse.size < 8:
        raise ShapeError("pulse must be a 1-D signal of at least 8 samples")
    rows = [np.abs(np.fft.rfft(pulse[a:b], 1024))[CROP_START:CROP_STOP]
            for a, b in segment_bounds(pulse.size)]
    return np.stack(rows)


@dataclass(frozen=True, eq=False)
class PseudoSpectrum:
    probs: np.ndarray
    pulse: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.probs.shape != (189,):
            raise ShapeError("pseudo-spectrum must have 189 bins")

    @property
    def bpm_axis(self) -> np.ndarray:
        return bin_to_bpm(np.arange(189))


CONFIDENCE_INF = float("inf")


@dataclass(frozen=True)
class HrEstimate:
    bpm: float
    confidence: float
    window_center: float = float("nan")
    low_confidence: bool = False


def _local_maxima(p: np.ndarray) -> np.ndarray:
    left = np.concatenate([[-np.inf], p[:-1]])
    right = np.concatenate([p[1:], [-np.inf]])
    return np.flatnonzero((p >= left) & (p >= right))


def pick_hr(spec: PseudoSpectrum, window_center: float = float("nan"),
            exclusion: int = 3, theta_conf: float = 1.2) -> HrEstimate:
    """HR at the spectrum's argmax; confidence = peak / largest local maximum beyond +-3 bins."""
    p = np.asarray(spec.probs, dtype=float)
    k = int(np.argmax(p))
    maxima = _local_maxima(p)
    others = maxima[np.abs(maxima - k) > exclusion]
    if others.size == 0:
        # a flat spectrum has no distinct second peak but no distinct first one either
        flat = np.all(p == p[k])
        conf = 1.0 if flat else CONFIDENCE_INF
    else:
        second = p[others].max()
        conf = CONFIDENCE_INF if second <= 0 else float(p[k] / second)
    return HrEstimate(float(bin_to_bpm(k)), conf, window_center, conf < theta_conf)


def infer(net: PulseNet, waveforms: np.ndarray) -> list[PseudoSpectrum]:
    """Run the network on one ``(16, T)`` or a batch ``(B, 16, T)`` of raw waveforms."""
    w = np.asarray(waveforms)
    if w.ndim == 2:
        w = w[None]
    out = net.forward(prepare_input(w), train=False)
    return [PseudoSpectrum(out.probs[i].astype(float), out.pulse[i].astype(float))
            for i in range(w.shape[0])]


def pulse_beats(pulse: np.ndarray, bpm: float, sample_rate: float = 15.0,
                refractory: float = 0.7) -> np.ndarray:
    """Beat sample indices: pulse peaks at least ``refractory`` beat periods apart."""
    distance = max(1, int(refractory * sample_rate * 60.0 / bpm))
    peaks, _ = find_peaks(np.asarray(pulse, dtype=float), distance=distance)
    return peaks


# --------------------------------------------------------------------------
# manifest file

class ManifestError(ValueError):
    pass


@dataclass
class ModelManifest:
    """Network description plus weights; serialized as JSON header + float32 blob."""

    layer_specs: list[dict]
    input_length: int
    params: dict[str, np.ndarray]
    profile: str = "sleep"
    version: int = MANIFEST_VERSION
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_net(cls, net: PulseNet, profile: str = "sleep", meta: dict | None = None):
        params = {k: np.asarray(v, dtype=np.float32).copy() for k, v in net.params.items()}
        return cls([dict(s) for s in net.layer_specs], net.input_length, params, profile,
                   MANIFEST_VERSION, dict(meta or {}))

    def to_net(self, dtype=np.float32) -> PulseNet:
        return PulseNet(self.layer_specs, self.input_length, self.params, dtype=dtype)

    @property
    def shapes(self):
        return PulseNet(self.layer_specs, self.input_length, self.params).param_shapes()

    @property
    def total_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    @property
    def trainable_params(self) -> int:
        shapes = self.shapes
        return int(sum(self.params[k].size for k, (_, t) in shapes.items() if t))

    def header(self) -> dict:
        shapes = self.shapes
        order = list(shapes)
        return {
            "version": self.version,
            "profile": self.profile,
            "input_length": self.input_length,
            "sample_rate": SAMPLE_RATE,
            "layers": self.layer_specs,
            "weights": [{"name": k, "shape": list(shapes[k][0]), "trainable": shapes[k][1]}
                        for k in order],
            "total_params": self.total_params,
            "trainable_params": self.trainable_params,
            "meta": self.meta,
        }

    def to_bytes(self) -> bytes:
        header = self.header()
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        blob = b"".join(
            np.ascontiguousarray(self.params[w["name"]], dtype="<f4").tobytes()
            for w in header["weights"]
        )
        return MANIFEST_MAGIC + struct.pack("<I", len(head)) + head + blob

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelManifest":
        if data[:4] != MANIFEST_MAGIC:
            raise ManifestError("not a model manifest (bad magic)")
        (n,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + n].decode())
        offset = 8 + n
        params = {}
        for w in header["weights"]:
            size = int(np.prod(w["shape"])) * 4
            if offset + size > len(data):
                raise ManifestError("manifest weight blob is truncated")
            params[w["name"]] = np.frombuffer(data[offset:offset + size], dtype="<f4").reshape(
                w["shape"]).astype(np.float32)
            offset += size
        if offset != len(data):
            raise ManifestError("manifest has trailing bytes")
        m = cls(header["layers"], header["input_length"], params, header["profile"],
                header["version"], header.get("meta", {}))
        if m.total_params != header["total_params"]:
            raise ManifestError("parameter count mismatch")
        return m

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ModelManifest":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
