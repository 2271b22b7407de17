"""Range processing, clutter removal, user detection and stillness gating."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from radar_hr.config import AdcCube, RangeProfileSeries, range_resolution


class InputError(ValueError):
    """Raised when a signal is too short or empty for the requested operation."""


@dataclass(frozen=True, eq=False)
class PowerRangeImage:
    """Receiver-combined power, shape ``(time, range_bin)``.

    ``looks`` is the number of independent complex values summed into each
    cell (the receiver count); CFAR uses it to set its threshold.
    """

    power: np.ndarray
    sample_rate: float
    looks: int = 1
    range_bin_size: float = 1.0

    @property
    def duration(self) -> float:
        return self.power.shape[0] / self.sample_rate


@dataclass(frozen=True)
class PresenceReport:
    present: bool
    range_bin: int = -1
    range_m: float = float("nan")
    still: bool | None = None
    stillness_ratio: float = float("nan")


@dataclass(frozen=True)
class FrontendConfig:
    guard_cells: int = 2
    training_cells: int = 8
    pfa: float = 1e-3
    min_detect_seconds: float = 4.0
    detect_seconds: float | None = 4.0
    f_split: float = 4.0
    theta_still: float = 2.5
    still_block_seconds: float = 4.0


def preprocess(cube: AdcCube) -> RangeProfileSeries:
    """Average chirps per burst, average adjacent burst pairs, then range FFT.

    A trailing odd burst is dropped.
    """
    samples = cube.samples
    if samples.shape[0] < 2 or samples.size == 0:
        raise InputError("cube needs at least two bursts")
    bursts = samples.mean(axis=1)
    n_pairs = bursts.shape[0] // 2
    pairs = bursts[: 2 * n_pairs].reshape(n_pairs, 2, *bursts.shape[1:]).mean(axis=1)
    profiles = np.fft.fft(pairs, axis=-1)
    cfg = cube.config
    return RangeProfileSeries(profiles, cfg.burst_rate / 2, range_resolution(cfg), cube.start_time)


def clutter_filter(series: RangeProfileSeries) -> RangeProfileSeries:
    """Remove the temporal-mean profile of every (receiver, range bin)."""
    if series.n_samples < 2:
        raise InputError("clutter filter needs at least two profiles")
    p = series.profiles
    return RangeProfileSeries(p - p.mean(axis=0, keepdims=True), series.sample_rate,
                              series.range_bin_size, series.start_time)


def combine_power(series: RangeProfileSeries) -> PowerRangeImage:
    p = series.profiles
    power = (p.real**2 + p.imag**2).sum(axis=1)
    return PowerRangeImage(power, series.sample_rate, looks=p.shape[1],
                           range_bin_size=series.range_bin_size)


def cfar_scale(n_train: int, looks: float, pfa: float) -> float:
    """Threshold multiplier on the training-cell mean for exponential noise.

    A cell summing ``looks`` exponential powers is Gamma(looks); the ratio of
    the cell to the training mean is F(2*looks, 2*n_train*looks) distributed,
    so the multiplier is that distribution's upper ``pfa`` quantile.  For one
    look it reduces to ``n_train * (pfa**(-1/n_train) - 1)``.
    """
    return float(stats.f.isf(pfa, 2 * looks, 2 * n_train * looks))


def ca_cfar(power: np.ndarray, looks: float = 1.0, guard: int = 2, train: int = 8,
            pfa: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Cell-averaging CFAR along the last axis.

    Returns ``(threshold, detections)``; cells lacking a full training window
    on either side get an infinite threshold.
    """
    power = np.asarray(power, dtype=float)
    n = power.shape[-1]
    if n < 2 * (guard + train) + 1:
        raise InputError(f"{n} cells cannot host {guard} guard + {train} training cells per side")
    csum = np.concatenate([np.zeros(power.shape[:-1] + (1,)), np.cumsum(power, axis=-1)], axis=-1)
    idx = np.arange(guard + train, n - guard - train)
    lead = csum[..., idx - guard] - csum[..., idx - guard - train]
    lag = csum[..., idx + guard + train + 1] - csum[..., idx + guard + 1]
    noise = (lead + lag) / (2 * train)
    threshold = np.full(power.shape, np.inf)
    threshold[..., idx] = cfar_scale(2 * train, looks, pfa) * noise
    return threshold, power > threshold


def cfar_detect(image: PowerRangeImage, cfg: FrontendConfig = FrontendConfig()) -> PresenceReport:
    """Detect the user on the time-averaged power profile; strongest detection wins.

    Only the positive-frequency half of the range axis is searched (real ADC
    sampling mirrors the other half).
    """
    if image.duration + 1e-9 < cfg.min_detect_seconds:
        raise InputError(f"image spans {image.duration:.2f} s, need {cfg.min_detect_seconds} s")
    n_bins = image.power.shape[1]
    half = n_bins // 2
    if half < 2 * (cfg.guard_cells + cfg.training_cells) + 1:
        raise InputError("range axis shorter than the CFAR window")
    t = image.power.shape[0]
    profile = image.power[:, :half].mean(axis=0)
    # temporal mean removal leaves t - 1 degrees of freedom per look
    looks = image.looks * max(t - 1, 1)
    _, det = ca_cfar(profile, looks, cfg.guard_cells, cfg.training_cells, cfg.pfa)
    det[0] = False
    if not det.any():
        return PresenceReport(False)
    candidates = np.flatnonzero(det)
    b = int(candidates[np.argmax(profile[candidates])])
    return PresenceReport(True, b, b * image.range_bin_size)


def doppler_ratio(signal: np.ndarray, sample_rate: float, f_split: float) -> float:
    """Low/high Doppler energy ratio of a (time, ...) complex signal; NaN if energy is zero."""
    x = np.asarray(signal)
    if x.ndim == 1:
        x = x[:, None]
    win = np.hanning(x.shape[0])[:, None]
    spec = np.abs(np.fft.fft(x * win, axis=0)) ** 2
    f = np.fft.fftfreq(x.shape[0], 1.0 / sample_rate)
    low = spec[np.abs(f) <= f_split].sum()
    high = spec[np.abs(f) > f_split].sum()
    if low + high <= 1e-300:
        return float("nan")
    if high == 0:
        return float("inf")
    return float(low / high)


def stillness(series: RangeProfileSeries, bin: int, cfg: FrontendConfig = FrontendConfig(),
              block_seconds: float | None = None) -> tuple[float, bool | None]:
    """Doppler stillness test on the clutter-filtered signal at ``bin``.

    With ``block_seconds`` the test runs on consecutive blocks and the worst
    (smallest) ratio decides.  Returns ``(ratio, still)`` with ``still=None``
    when the signal carries no energy.
    """
    if not 0 <= bin < series.profiles.shape[2]:
        raise InputError(f"bin {bin} out of range")
    x = series.profiles[:, :, bin]
    if block_seconds is None:
        blocks = [x]
    else:
        size = max(int(round(block_seconds * series.sample_rate)), 2)
        n_blocks = max(len(x) // size, 1)
        blocks = [x[i * size:(i + 1) * size] for i in range(n_blocks)]
    ratios = [doppler_ratio(b, series.sample_rate, cfg.f_split) for b in blocks]
    if all(np.isnan(r) for r in ratios):
        return float("nan"), None
    ratio = float(np.nanmin(ratios))
    return ratio, bool(ratio >= cfg.theta_still)


def detect_presence(series: RangeProfileSeries, cfg: FrontendConfig = FrontendConfig()
                    ) -> PresenceReport:
    """Full presence block on one processing window: detect, locate, gate stillness.

    Detection uses the trailing ``cfg.detect_seconds`` of the window (all of
    it when ``None``); stillness is judged over the whole window.
    """
    filtered = clutter_filter(series)
    recent = filtered
    if cfg.detect_seconds is not None:
        n = int(round(cfg.detect_seconds * series.sample_rate))
        if n < filtered.n_samples:
            recent = filtered.slice(filtered.n_samples - n, filtered.n_samples)
    report = cfar_detect(combine_power(recent), cfg)
    if not report.present:
        return report
    ratio, still = stillness(filtered, report.range_bin, cfg, cfg.still_block_seconds)
    return PresenceReport(True, report.range_bin, report.range_m, still, ratio)
