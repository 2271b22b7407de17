"""Band-pass + spectral peak baseline with peak-to-average waveform selection."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from radar_hr.frontend import InputError

PASS_BAND_HZ = (40 / 60, 200 / 60)
FILTER_ORDER = 4
NFFT = 1024
THETA_PAR = 4.0  # rejects >= 95% of 16-waveform white-noise windows


@dataclass(frozen=True)
class BaselineReport:
    bpm: float | None
    par: float
    chosen_bin: int


@lru_cache(maxsize=8)
def _sos(rate: float, order: int = FILTER_ORDER) -> np.ndarray:
    # Butterworth band-pass as second-order sections; applied forward-backward
    return signal.butter(order, PASS_BAND_HZ, btype="bandpass", fs=rate, output="sos")


def bandpass(waveform: np.ndarray, rate: float = 15.0) -> np.ndarray:
    """Zero-phase 40-200 bpm band-pass."""
    x = np.asarray(waveform, dtype=float)
    sos = _sos(rate)
    padlen = 3 * (2 * len(sos) + 1)
    if x.shape[-1] <= padlen:
        raise InputError(f"waveform of {x.shape[-1]} samples is too short for the band-pass")
    return signal.sosfiltfilt(sos, x, axis=-1)


def spectrum_par(waveform: np.ndarray, rate: float = 15.0) -> tuple[float, float, np.ndarray]:
    """``(peak bpm, PAR, magnitude)`` of the band-passed waveform inside 40-200 bpm."""
    y = bandpass(waveform, rate)
    mag = np.abs(np.fft.rfft(y, NFFT))
    bpm = np.fft.rfftfreq(NFFT, 1 / rate) * 60
    band = (bpm >= 40) & (bpm <= 200)
    m = mag[band]
    mean = m.mean()
    if mean <= 0:
        return float("nan"), 0.0, mag
    k = int(np.argmax(m))
    return float(bpm[band][k]), float(m[k] / mean), mag


def baseline_hr(waveforms: np.ndarray, rate: float = 15.0,
                theta_par: float = THETA_PAR) -> BaselineReport:
    """Pick the waveform with the largest PAR; ties go to the lowest index."""
    waveforms = np.atleast_2d(waveforms)
    results = [spectrum_par(w, rate) for w in waveforms]
    pars = np.array([r[1] for r in results])
    best = int(np.argmax(pars))
    bpm, par, _ = results[best]
    if not par >= theta_par:
        return BaselineReport(None, par, best)
    return BaselineReport(bpm, par, best)
