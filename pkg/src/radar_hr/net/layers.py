"""Numpy 1-D layers with hand-written reverse mode.

Every layer reads its parameters from a shared ``params`` dict and adds its
gradients into a ``grads`` dict with the same keys, so a parameter block used
by several branches has exactly one storage.  Activations are laid out as
``(batch, channels, length)``.  ``forward`` caches what ``backward`` needs on
the layer object, so one layer instance serves one forward/backward at a time.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_MOMENTUM = 0.9
BN_EPS = 1e-3


class ShapeError(ValueError):
    pass


def _same_pad(k: int) -> tuple[int, int]:
    return (k - 1) // 2, k // 2


def _accumulate(grads: dict, key: str, value: np.ndarray) -> None:
    if key in grads:
        grads[key] += value
    else:
        grads[key] = value.copy()


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class Layer:
    name: str = ""

    def param_shapes(self) -> dict[str, tuple[tuple[int, ...], bool]]:
        """``{key: (shape, trainable)}``."""
        return {}

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {}

    def forward(self, params: dict, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, params: dict, grads: dict, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1D(Layer):
    def __init__(self, name: str, c_in: int, c_out: int, kernel: int, bias: bool = True):
        self.name, self.c_in, self.c_out, self.kernel, self.bias = name, c_in, c_out, kernel, bias

    def param_shapes(self):
        shapes = {f"{self.name}.w": ((self.c_out, self.c_in, self.kernel), True)}
        if self.bias:
            shapes[f"{self.name}.b"] = ((self.c_out,), True)
        return shapes

    def init(self, rng):
        fan_in, fan_out = self.c_in * self.kernel, self.c_out * self.kernel
        p = {f"{self.name}.w": glorot(rng, (self.c_out, self.c_in, self.kernel), fan_in, fan_out)}
        if self.bias:
            p[f"{self.name}.b"] = np.zeros(self.c_out)
        return p

    def forward(self, params, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ShapeError(f"{self.name}: expected (N, {self.c_in}, T), got {x.shape}")
        n, c, t = x.shape
        cols = _im2col(x, self.kernel, _same_pad(self.kernel))
        out = cols @ params[f"{self.name}.w"].reshape(self.c_out, -1).T
        if self.bias:
            out += params[f"{self.name}.b"]
        self._cache = (cols, x.shape)
        return out.reshape(n, t, self.c_out).transpose(0, 2, 1)

    def backward(self, params, grads, dout):
        cols, (n, c, t) = self._cache
        self._cache = None
        k = self.kernel
        w = params[f"{self.name}.w"]
        d2 = dout.transpose(0, 2, 1).reshape(n * t, self.c_out)
        _accumulate(grads, f"{self.name}.w", (d2.T @ cols).reshape(w.shape))
        if self.bias:
            _accumulate(grads, f"{self.name}.b", d2.sum(axis=0))
        # input gradient: correlate dout with the flipped, transposed kernel
        left, right = _same_pad(k)
        if k == 1:
            dx = d2 @ w[:, :, 0]
        else:
            dx = _im2col(dout, k, (right, left)) @ w[:, :, ::-1].transpose(1, 0, 2).reshape(c, -1).T
        return dx.reshape(n, t, c).transpose(0, 2, 1)


def _im2col(x: np.ndarray, k: int, pad: tuple[int, int]) -> np.ndarray:
    """``(N*T, C*K)`` matrix of zero-padded length-``k`` windows."""
    n, c, t = x.shape
    if k == 1:
        return x.transpose(0, 2, 1).reshape(n * t, c)
    xp = np.pad(x, ((0, 0), (0, 0), pad))
    return sliding_window_view(xp, k, axis=2).transpose(0, 2, 1, 3).reshape(n * t, c * k)


class DepthwiseConv1D(Layer):
    def __init__(self, name: str, channels: int, kernel: int):
        self.name, self.channels, self.kernel = name, channels, kernel

    def param_shapes(self):
        return {f"{self.name}.w": ((self.channels, self.kernel), True)}

    def init(self, rng):
        return {f"{self.name}.w": glorot(rng, (self.channels, self.kernel), self.kernel, self.kernel)}

    def forward(self, params, x, train=False):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: expected (N, {self.channels}, T), got {x.shape}")
        t = x.shape[2]
        xp = np.pad(x, ((0, 0), (0, 0), _same_pad(self.kernel)))
        w = params[f"{self.name}.w"]
        out = np.zeros_like(x)
        for j in range(self.kernel):
            out += w[None, :, j, None] * xp[:, :, j:j + t]
        self._cache = xp
        return out

    def backward(self, params, grads, dout):
        xp = self._cache
        t = dout.shape[2]
        w = params[f"{self.name}.w"]
        dw = np.empty_like(w)
        dxp = np.zeros_like(xp)
        for j in range(self.kernel):
            dw[:, j] = np.einsum("nct,nct->c", dout, xp[:, :, j:j + t])
            dxp[:, :, j:j + t] += w[None, :, j, None] * dout
        _accumulate(grads, f"{self.name}.w", dw)
        left, _ = _same_pad(self.kernel)
        self._cache = None
        return dxp[:, :, left:left + t]


class SeparableConv1D(Layer):
    """Depthwise convolution followed by a biased pointwise (1x1) convolution."""

    def __init__(self, name: str, c_in: int, c_out: int, kernel: int):
        self.name = name
        self.depthwise = DepthwiseConv1D(f"{name}.dw", c_in, kernel)
        self.pointwise = Conv1D(f"{name}.pw", c_in, c_out, 1)

    def param_shapes(self):
        return {**self.depthwise.param_shapes(), **self.pointwise.param_shapes()}

    def init(self, rng):
        return {**self.depthwise.init(rng), **self.pointwise.init(rng)}

    def forward(self, params, x, train=False):
        return self.pointwise.forward(params, self.depthwise.forward(params, x, train), train)

    def backward(self, params, grads, dout):
        return self.depthwise.backward(params, grads, self.pointwise.backward(params, grads, dout))


class BatchNorm(Layer):
    """Per-channel batch normalization; statistics pooled over batch and length."""

    def __init__(self, name: str, channels: int):
        self.name, self.channels = name, channels

    def param_shapes(self):
        c = (self.channels,)
        return {f"{self.name}.gamma": (c, True), f"{self.name}.beta": (c, True),
                f"{self.name}.moving_mean": (c, False), f"{self.name}.moving_var": (c, False)}

    def init(self, rng):
        c = self.channels
        return {f"{self.name}.gamma": np.ones(c), f"{self.name}.beta": np.zeros(c),
                f"{self.name}.moving_mean": np.zeros(c), f"{self.name}.moving_var": np.ones(c)}

    def forward(self, params, x, train=False):
        gamma = params[f"{self.name}.gamma"]
        beta = params[f"{self.name}.beta"]
        if train:
            # per-row contiguous reductions, channel totals in float64
            m = x.shape[0] * x.shape[2]
            mean = x.sum(axis=2).sum(axis=0, dtype=np.float64) / m
            sq = np.einsum("nct,nct->nc", x, x).sum(axis=0, dtype=np.float64) / m
            var = np.maximum(sq - mean * mean, 0.0)
            mm, mv = f"{self.name}.moving_mean", f"{self.name}.moving_var"
            params[mm] *= BN_MOMENTUM
            params[mm] += ((1 - BN_MOMENTUM) * mean).astype(params[mm].dtype)
            params[mv] *= BN_MOMENTUM
            params[mv] += ((1 - BN_MOMENTUM) * var).astype(params[mv].dtype)
        else:
            mean = params[f"{self.name}.moving_mean"].astype(np.float64)
            var = params[f"{self.name}.moving_var"].astype(np.float64)
        inv = 1.0 / np.sqrt(var + BN_EPS)
        scale = gamma * inv
        shift = beta - mean * scale
        out = x * scale.astype(x.dtype)[None, :, None]
        out += shift.astype(x.dtype)[None, :, None]
        self._cache = (x, mean, inv, train)
        return out

    def backward(self, params, grads, dout):
        x, mean, inv, train = self._cache
        self._cache = None
        gamma = params[f"{self.name}.gamma"]
        dt = dout.dtype
        sd = dout.sum(axis=2).sum(axis=0, dtype=np.float64)
        sdx = np.einsum("nct,nct->nc", dout, x).sum(axis=0, dtype=np.float64)
        s_xhat = inv * (sdx - mean * sd)  # sum of dout * xhat
        _accumulate(grads, f"{self.name}.gamma", s_xhat.astype(gamma.dtype))
        _accumulate(grads, f"{self.name}.beta", sd.astype(gamma.dtype))
        g = gamma * inv
        if not train:
            return dout * g.astype(dt)[None, :, None]
        m = dout.shape[0] * dout.shape[2]
        coef_x = -g * inv * s_xhat / m
        const = g * (inv * mean * s_xhat - sd) / m
        dx = dout * g.astype(dt)[None, :, None]
        dx += x * coef_x.astype(dt)[None, :, None]
        dx += const.astype(dt)[None, :, None]
        return dx


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, params, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, params, grads, dout):
        return dout * self._mask


class ResNetLayer(Layer):
    """Conv -> BN -> ReLU -> SeparableConv -> BN -> (+ shortcut) -> ReLU.

    The shortcut is the identity when channel counts match, otherwise a
    biased 1x1 convolution.
    """

    def __init__(self, name: str, c_in: int, filters: int, kernel: int):
        self.name, self.c_in, self.filters, self.kernel = name, c_in, filters, kernel
        self.conv = Conv1D(f"{name}.conv", c_in, filters, kernel)
        self.bn1 = BatchNorm(f"{name}.bn1", filters)
        self.relu1 = ReLU()
        self.sep = SeparableConv1D(f"{name}.sep", filters, filters, kernel)
        self.bn2 = BatchNorm(f"{name}.bn2", filters)
        self.proj = Conv1D(f"{name}.proj", c_in, filters, 1) if c_in != filters else None
        self.relu2 = ReLU()

    def sublayers(self):
        layers = [self.conv, self.bn1, self.sep, self.bn2]
        return layers + ([self.proj] if self.proj is not None else [])

    def param_shapes(self):
        out = {}
        for layer in self.sublayers():
            out.update(layer.param_shapes())
        return out

    def init(self, rng):
        out = {}
        for layer in self.sublayers():
            out.update(layer.init(rng))
        return out

    def forward(self, params, x, train=False):
        h = self.conv.forward(params, x, train)
        h = self.relu1.forward(params, self.bn1.forward(params, h, train), train)
        h = self.bn2.forward(params, self.sep.forward(params, h, train), train)
        short = self.proj.forward(params, x, train) if self.proj is not None else x
        return self.relu2.forward(params, h + short, train)

    def backward(self, params, grads, dout):
        d = self.relu2.backward(params, grads, dout)
        dshort = self.proj.backward(params, grads, d) if self.proj is not None else d
        dh = self.sep.backward(params, grads, self.bn2.backward(params, grads, d))
        dh = self.bn1.backward(params, grads, self.relu1.backward(params, grads, dh))
        return self.conv.backward(params, grads, dh) + dshort


class BranchSum(Layer):
    """Element-wise sum over the branch axis folded into the batch."""

    def __init__(self, n_branches: int, name: str = "sum"):
        self.name, self.n_branches = name, n_branches

    def forward(self, params, x, train=False):
        n, c, t = x.shape
        if n % self.n_branches:
            raise ShapeError("batch is not a multiple of the branch count")
        # float64 accumulation makes the float32 result independent of branch order
        folded = x.reshape(n // self.n_branches, self.n_branches, c, t)
        return folded.sum(axis=1, dtype=np.float64).astype(x.dtype)

    def backward(self, params, grads, dout):
        b, c, t = dout.shape
        return np.broadcast_to(dout[:, None], (b, self.n_branches, c, t)).reshape(-1, c, t).copy()


# --------------------------------------------------------------------------
# multi-resolution spectrum

NFFT = 1024
CROP_START = 40
CROP_STOP = 229  # exclusive
N_SPEC = CROP_STOP - CROP_START


def segment_bounds(length: int) -> list[tuple[int, int]]:
    """Full, two half and four quarter segments of a ``length``-sample signal."""
    out = []
    for parts in (1, 2, 4):
        edges = np.linspace(0, length, parts + 1).round().astype(int)
        out.extend((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))
    return out


def dft_matrices(m: int, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Cos/sin matrices ``(N_SPEC, m)`` of the zero-padded 1024-point DFT, cropped."""
    k = np.arange(CROP_START, CROP_STOP)[:, None]
    n = np.arange(m)[None, :]
    ang = 2 * np.pi * ((k * n) % NFFT) / NFFT
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


class FFTBank(Layer):
    """Seven cropped DFT magnitudes of a single-channel signal, each scaled by 1/segment length.

    Implemented as explicit DFT matrices so the magnitude's reverse mode is
    ``C^T (g re/|X|) - S^T (g im/|X|)`` (zero where ``|X| = 0``).
    """

    def __init__(self, length: int, name: str = "fft_bank"):
        if length > NFFT:
            raise ShapeError(f"signal length {length} exceeds the {NFFT}-point transform")
        self.name, self.length = name, length
        self.bounds = segment_bounds(length)
        self._mats = {}

    def _mat(self, m, dtype):
        key = (m, np.dtype(dtype).str)
        if key not in self._mats:
            self._mats[key] = dft_matrices(m, dtype)
        return self._mats[key]

    def forward(self, params, x, train=False):
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.length:
            raise ShapeError(f"{self.name}: expected (N, 1, {self.length}), got {x.shape}")
        sig = x[:, 0, :]
        out = np.empty((x.shape[0], len(self.bounds), N_SPEC), dtype=x.dtype)
        cache = []
        for i, (a, b) in enumerate(self.bounds):
            c, s = self._mat(b - a, x.dtype)
            seg = sig[:, a:b]
            re = seg @ c.T
            im = -(seg @ s.T)
            mag = np.sqrt(re * re + im * im)
            out[:, i] = mag / (b - a)
            cache.append((re, im, mag))
        self._cache = cache
        return out

    def backward(self, params, grads, dout):
        n = dout.shape[0]
        dx = np.zeros((n, self.length), dtype=dout.dtype)
        for i, ((a, b), (re, im, mag)) in enumerate(zip(self.bounds, self._cache)):
            c, s = self._mat(b - a, dout.dtype)
            g = dout[:, i] / (b - a)
            safe = np.where(mag > 0, mag, 1.0)
            gr = np.where(mag > 0, g * re / safe, 0.0)
            gi = np.where(mag > 0, g * im / safe, 0.0)
            dx[:, a:b] += gr @ c - gi @ s
        self._cache = None
        return dx[:, None, :]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
