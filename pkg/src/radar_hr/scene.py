"""Synthetic radar scenes with exact ground truth.

A scene is a set of point reflectors: the subject (optionally spread over a
few body scatterers that share its chest displacement), static clutter and
optional moving interferers.  Two synthesis paths are provided:
:func:`synth_adc` produces raw real-valued ADC samples, :func:`synth_decimated`
emits the burst-averaged range profiles directly using the linearity of the
averaging and of the range FFT.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from radar_hr.config import (
    SPEED_OF_LIGHT,
    AdcCube,
    RadarConfig,
    RangeProfileSeries,
    range_resolution,
    unambiguous_range,
    wavelength,
)


class SceneError(ValueError):
    """Raised for scenes that cannot be synthesized."""


@dataclass(frozen=True)
class VitalTrack:
    """Chest micro-motion of one person.

    ``motion_segments`` holds ``(start s, end s, amplitude m, bandwidth Hz)``.
    ``resp_harmonics`` lists relative amplitudes of the 2nd, 3rd, ... respiration
    harmonics; empty means a pure sinusoid.
    """

    beat_times: tuple[float, ...] = ()
    resp_rate: float = 0.25
    resp_amplitude: float = 0.0
    heartbeat_amplitude: float = 0.0
    heartbeat_pulse_width: float = 0.05
    motion_segments: tuple[tuple[float, float, float, float], ...] = ()
    resp_harmonics: tuple[float, ...] = ()
    motion_seed: int = 0

    def __post_init__(self):
        bt = np.asarray(self.beat_times, dtype=float)
        if bt.size > 1 and np.any(np.diff(bt) <= 0):
            raise SceneError("beat_times must be strictly increasing")
        if self.resp_amplitude < 0 or self.heartbeat_amplitude < 0:
            raise SceneError("amplitudes must be non-negative")
        object.__setattr__(self, "beat_times", tuple(float(b) for b in self.beat_times))
        object.__setattr__(
            self, "motion_segments", tuple(tuple(float(v) for v in s) for s in self.motion_segments)
        )
        object.__setattr__(self, "resp_harmonics", tuple(float(h) for h in self.resp_harmonics))

    def to_dict(self) -> dict:
        return {
            "beat_times": list(self.beat_times),
            "resp_rate": self.resp_rate,
            "resp_amplitude": self.resp_amplitude,
            "heartbeat_amplitude": self.heartbeat_amplitude,
            "heartbeat_pulse_width": self.heartbeat_pulse_width,
            "motion_segments": [list(s) for s in self.motion_segments],
            "resp_harmonics": list(self.resp_harmonics),
            "motion_seed": self.motion_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VitalTrack":
        d = dict(d)
        d["beat_times"] = tuple(d.get("beat_times", ()))
        d["motion_segments"] = tuple(tuple(s) for s in d.get("motion_segments", ()))
        d["resp_harmonics"] = tuple(d.get("resp_harmonics", ()))
        return cls(**d)


@dataclass(frozen=True)
class Interferer:
    range: float
    amplitude: float
    track: VitalTrack = field(default_factory=VitalTrack)
    angle: float = 0.0

    def to_dict(self) -> dict:
        return {"range": self.range, "amplitude": self.amplitude,
                "track": self.track.to_dict(), "angle": self.angle}

    @classmethod
    def from_dict(cls, d: dict) -> "Interferer":
        return cls(d["range"], d["amplitude"], VitalTrack.from_dict(d.get("track", {})),
                   d.get("angle", 0.0))


@dataclass(frozen=True)
class SceneSpec:
    """One recording: subject, clutter, interferers, noise and duration.

    ``noise_snr_db=None`` means noiseless.  SNR is per ADC sample against the
    subject's main reflection (power ``subject_amplitude**2 / 2``).
    ``body_scatterers`` are ``(range offset m, relative amplitude)`` pairs
    moving with the subject.
    """

    subject_range: float = 0.6
    subject_angle: float = 0.0
    track: VitalTrack = field(default_factory=VitalTrack)
    clutter: tuple[tuple[float, float], ...] = ()
    noise_snr_db: float | None = None
    seed: int = 0
    duration: float = 60.0
    subject_amplitude: float = 1.0
    body_scatterers: tuple[tuple[float, float], ...] = ()
    interferers: tuple[Interferer, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "clutter", tuple(tuple(float(v) for v in c) for c in self.clutter))
        object.__setattr__(
            self, "body_scatterers", tuple(tuple(float(v) for v in b) for b in self.body_scatterers)
        )
        object.__setattr__(self, "interferers", tuple(self.interferers))
        if self.duration <= 0:
            raise SceneError("duration must be positive")

    def to_dict(self) -> dict:
        return {
            "subject_range": self.subject_range,
            "subject_angle": self.subject_angle,
            "track": self.track.to_dict(),
            "clutter": [list(c) for c in self.clutter],
            "noise_snr_db": self.noise_snr_db,
            "seed": self.seed,
            "duration": self.duration,
            "subject_amplitude": self.subject_amplitude,
            "body_scatterers": [list(b) for b in self.body_scatterers],
            "interferers": [i.to_dict() for i in self.interferers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["track"] = VitalTrack.from_dict(d.get("track", {}))
        d["clutter"] = tuple(tuple(c) for c in d.get("clutter", ()))
        d["body_scatterers"] = tuple(tuple(b) for b in d.get("body_scatterers", ()))
        d["interferers"] = tuple(Interferer.from_dict(i) for i in d.get("interferers", ()))
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-window reference heart rates.

    ``window_hrs`` holds ``(window center s, bpm or None)``; ``window_ends``
    the matching emission times.
    """

    window_hrs: list
    window_ends: np.ndarray
    displacement: np.ndarray
    sample_rate: float
    still_mask: np.ndarray


# --------------------------------------------------------------------------
# displacement

def _motion_term(track: VitalTrack, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    for idx, (start, end, amp, bw) in enumerate(track.motion_segments):
        inside = (t >= start) & (t <= end)
        if not inside.any() or amp == 0:
            continue
        rng = np.random.default_rng([track.motion_seed, idx])
        n_tones = 16
        freqs = rng.uniform(0.1 * bw, bw, n_tones)
        phases = rng.uniform(0, 2 * np.pi, n_tones)
        ts = t[inside]
        wave = np.sin(2 * np.pi * freqs[None, :] * (ts[:, None] - start) + phases).sum(axis=1)
        wave *= np.sqrt(2.0 / n_tones)  # unit RMS
        ramp = min(0.5, 0.25 * (end - start))
        if ramp > 0:
            taper = np.clip(np.minimum(ts - start, end - ts) / ramp, 0.0, 1.0)
            wave *= np.sin(0.5 * np.pi * taper) ** 2
        out[inside] += amp * wave
    return out


def synth_displacement(track: VitalTrack, t) -> np.ndarray:
    """Chest displacement in meters at time(s) ``t``.

    Respiration sinusoid (plus optional harmonics), one Gaussian bump per
    heartbeat and a band-limited motion term inside each motion segment.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0):
        raise SceneError("time must be non-negative")
    w = 2 * np.pi * track.resp_rate
    d = track.resp_amplitude * np.sin(w * t)
    for h, rel in enumerate(track.resp_harmonics, start=2):
        d = d + track.resp_amplitude * rel * np.sin(h * w * t)
    if track.heartbeat_amplitude > 0 and track.beat_times:
        width = track.heartbeat_pulse_width
        order = np.argsort(t, kind="stable")
        ts = t[order]
        hb = np.zeros_like(ts)
        for tb in track.beat_times:
            lo, hi = np.searchsorted(ts, [tb - 8 * width, tb + 8 * width])
            if hi > lo:
                u = (ts[lo:hi] - tb) / width
                hb[lo:hi] += np.exp(-0.5 * u * u)
        d = d + track.heartbeat_amplitude * hb[np.argsort(order, kind="stable")]
    if track.motion_segments:
        d = d + _motion_term(track, t)
    return d[0] if scalar else d


# --------------------------------------------------------------------------
# reflectors

@dataclass(frozen=True)
class _Reflector:
    range: float
    amplitude: float
    angle: float
    track: VitalTrack | None


def _reflectors(scene: SceneSpec, config: RadarConfig) -> list[_Reflector]:
    refl = []
    if scene.subject_amplitude > 0:
        refl.append(_Reflector(scene.subject_range, scene.subject_amplitude,
                               scene.subject_angle, scene.track))
        for off, rel in scene.body_scatterers:
            refl.append(_Reflector(scene.subject_range + off, rel * scene.subject_amplitude,
                                   scene.subject_angle, scene.track))
    for r, a in scene.clutter:
        refl.append(_Reflector(r, a, 0.0, None))
    for itf in scene.interferers:
        refl.append(_Reflector(itf.range, itf.amplitude, itf.angle, itf.track))
    limit = unambiguous_range(config)
    for r in refl:
        if not 0 < r.range < limit:
            raise SceneError(f"reflector at {r.range:.3f} m outside (0, {limit:.3f}) m")
    return refl


def _noise_sigma(scene: SceneSpec) -> float:
    if scene.noise_snr_db is None or not np.isfinite(scene.noise_snr_db):
        return 0.0
    return float(np.sqrt(0.5 * scene.subject_amplitude**2 / 10 ** (scene.noise_snr_db / 10)))


def _chirp_times(config: RadarConfig, n_bursts: int) -> np.ndarray:
    b = np.arange(n_bursts)[:, None] / config.burst_rate
    c = np.arange(config.chirps_per_burst)[None, :] / config.chirp_rate
    return b + c


def _steering(config: RadarConfig, angle: float) -> np.ndarray:
    lam = wavelength(config)
    x = np.array([p[0] for p in config.rx_positions])
    return 2 * np.pi / lam * x * np.sin(angle)


def _beat_frequency(config: RadarConfig, r: float) -> float:
    return 2.0 * config.slope * r / SPEED_OF_LIGHT


def _chirp_phase(refl: _Reflector, times: np.ndarray, lam: float) -> np.ndarray:
    d = synth_displacement(refl.track, times) if refl.track is not None else np.zeros_like(times)
    return 4 * np.pi * (refl.range + d) / lam


def _n_bursts(scene: SceneSpec, config: RadarConfig) -> int:
    return int(np.floor(scene.duration * config.burst_rate + 1e-9))


def synth_adc(scene: SceneSpec, config: RadarConfig | None = None) -> AdcCube:
    """Raw ADC cube ``(burst, chirp, receiver, sample)`` for ``scene``."""
    config = config or RadarConfig()
    n_bursts = _n_bursts(scene, config)
    n = np.arange(config.samples_per_chirp)
    lam = wavelength(config)
    times = _chirp_times(config, n_bursts)
    cube = np.zeros((n_bursts, config.chirps_per_burst, config.rx_count,
                     config.samples_per_chirp))
    for refl in _reflectors(scene, config):
        fast = 2 * np.pi * _beat_frequency(config, refl.range) * n / config.adc_rate
        phi = _chirp_phase(refl, times.ravel(), lam).reshape(times.shape)
        phi = phi[:, :, None] + _steering(config, refl.angle)[None, None, :]
        cube += refl.amplitude * np.cos(fast[None, None, None, :] + phi[..., None])
    sigma = _noise_sigma(scene)
    if sigma > 0:
        rng = np.random.default_rng(scene.seed)
        cube += sigma * rng.standard_normal(cube.shape)
    return AdcCube(cube, config)


def synth_decimated(scene: SceneSpec, config: RadarConfig | None = None) -> RangeProfileSeries:
    """Range profiles after burst/pair averaging, without materializing ADC samples.

    Averaging and the range FFT are linear, so each reflector contributes
    ``a/2 * (M * K+ + conj(M) * K-)`` where ``M`` is the mean chirp phasor
    over the averaged chirps and ``K+-`` are FFTs of the unit beat tone and
    its conjugate.
    """
    config = config or RadarConfig()
    n_bursts = _n_bursts(scene, config)
    n_pairs = n_bursts // 2
    nfft = config.samples_per_chirp
    n = np.arange(nfft)
    lam = wavelength(config)
    times = _chirp_times(config, 2 * n_pairs).reshape(n_pairs, 2 * config.chirps_per_burst)
    profiles = np.zeros((n_pairs, config.rx_count, nfft), dtype=complex)
    for refl in _reflectors(scene, config):
        tone = np.exp(2j * np.pi * _beat_frequency(config, refl.range) * n / config.adc_rate)
        k_pos = np.fft.fft(tone)
        k_neg = np.fft.fft(np.conj(tone))
        phi = _chirp_phase(refl, times.ravel(), lam).reshape(times.shape)
        m = np.exp(1j * phi).mean(axis=1)
        steer = np.exp(1j * _steering(config, refl.angle))
        mp = m[:, None] * steer[None, :]
        profiles += 0.5 * refl.amplitude * (
            mp[..., None] * k_pos + np.conj(mp)[..., None] * k_neg
        )
    sigma = _noise_sigma(scene)
    if sigma > 0:
        rng = np.random.default_rng(scene.seed)
        avg_sigma = sigma / np.sqrt(2 * config.chirps_per_burst)
        profiles += np.fft.fft(avg_sigma * rng.standard_normal(profiles.shape), axis=-1)
    return RangeProfileSeries(profiles, config.burst_rate / 2, range_resolution(config), 0.0)


def decimated_times(scene: SceneSpec, config: RadarConfig | None = None) -> np.ndarray:
    """Timestamp (first chirp) of every decimated profile."""
    config = config or RadarConfig()
    n_pairs = _n_bursts(scene, config) // 2
    return np.arange(n_pairs) * 2.0 / config.burst_rate


# --------------------------------------------------------------------------
# ground truth

def window_hr(beat_times, start: float, end: float) -> float | None:
    """Mean HR from beats falling in ``[start, end)``; None with fewer than 2 beats."""
    bt = np.asarray(beat_times, dtype=float)
    inside = bt[(bt >= start) & (bt < end)]
    if inside.size < 2:
        return None
    return 60.0 * (inside.size - 1) / (inside[-1] - inside[0])


def window_ends(duration: float, length: float, step: float) -> np.ndarray:
    if length <= 0 or step <= 0:
        raise ValueError("window length and step must be positive")
    n = int(np.floor((duration - length) / step + 1e-9)) + 1
    return length + step * np.arange(max(n, 0))


def gen_ground_truth(scene: SceneSpec, windowing: tuple[float, float] = (60.0, 15.0),
                     config: RadarConfig | None = None) -> GroundTruth:
    """Reference HR per window; windows overlapping a motion segment are not still."""
    length, step = windowing
    config = config or RadarConfig()
    ends = window_ends(scene.duration, length, step)
    hrs, still = [], []
    for end in ends:
        start = end - length
        hrs.append((float(end - length / 2), window_hr(scene.track.beat_times, start, end)))
        still.append(not any(s < end and e > start for s, e, _, _ in scene.track.motion_segments))
    t = decimated_times(scene, config)
    disp = synth_displacement(scene.track, t) if t.size else np.zeros(0)
    return GroundTruth(hrs, ends, disp, config.burst_rate / 2, np.array(still, dtype=bool))


# --------------------------------------------------------------------------
# corpus generation

HR_RANGES = {"sleep": (45.0, 100.0), "meditation": (45.0, 115.0)}
MAX_RESP_VELOCITY = 8e-3  # m/s; keeps the decimated phase step below pi


def make_beat_times(rng: np.random.Generator, hr_bpm: float, duration: float,
                    resp_rate: float = 0.25, hrv: float = 0.02) -> tuple[float, ...]:
    """Beat times with mild variability around ``hr_bpm``, clipped to 35-200 bpm."""
    base = 60.0 / hr_bpm
    beats = [rng.uniform(0, base)]
    drift = 0.0
    while beats[-1] < duration + base:
        drift = 0.9 * drift + rng.normal(0, hrv)
        rsa = 0.02 * np.sin(2 * np.pi * resp_rate * beats[-1])
        ibi = float(np.clip(base * (1 + drift + rsa), 60 / 200, 60 / 35))
        beats.append(beats[-1] + ibi)
    return tuple(b for b in beats if b >= 0)


def _harmonic_options(hr: float, tolerance: float = 3.0) -> list[tuple[int, float, float]]:
    """``(k, lowest, highest resp rate)`` putting the k-th harmonic within ``tolerance`` bpm."""
    out = []
    for k in (2, 3, 4):
        lo_r = max(0.15, (hr - tolerance) / 60 / k)
        hi_r = min(0.4, (hr + tolerance) / 60 / k)
        if lo_r < hi_r:
            out.append((k, lo_r, hi_r))
    return out


def random_scene(rng: np.random.Generator, profile: str = "sleep", duration: float = 60.0,
                 snr_db: tuple[float, float] = (10.0, 25.0), harmonic_stress: bool = False,
                 motion: bool = False, seed: int | None = None) -> SceneSpec:
    """Draw a scene from the default corpus distribution.

    HR is uniform over the profile's range, respiration 0.15-0.4 Hz with
    1-8 mm amplitude and heartbeat 0.1-0.5 mm.  ``harmonic_stress`` places a
    respiration harmonic (2x-4x) within 3 bpm of the HR and makes it strong.
    """
    lo, hi = HR_RANGES[profile]
    hr = rng.uniform(lo, hi)
    resp_rate = rng.uniform(0.15, 0.4)
    harmonics = [rng.uniform(0.0, 0.15), rng.uniform(0.0, 0.08), rng.uniform(0.0, 0.04)]
    beats = make_beat_times(rng, hr, duration, resp_rate)
    if harmonic_stress:
        # anchor the harmonic on the realized mean HR, which drifts from the draw
        while True:
            actual = window_hr(beats, 0.0, duration) or hr
            options = _harmonic_options(actual)
            if options:
                break
            hr = rng.uniform(lo, hi)
            beats = make_beat_times(rng, hr, duration, resp_rate)
        k, lo_r, hi_r = options[rng.integers(len(options))]
        resp_rate = rng.uniform(lo_r, hi_r)
        harmonics[k - 2] = rng.uniform(0.06, 0.15)
    hb_amp = rng.uniform(0.1e-3, 0.5e-3)
    resp_amp = rng.uniform(1e-3, 8e-3)
    resp_amp = min(resp_amp, MAX_RESP_VELOCITY / (2 * np.pi * resp_rate))
    resp_amp = float(np.clip(resp_amp, 10 * hb_amp, 100 * hb_amp))
    segments = ()
    if motion:
        start = rng.uniform(0.2, 0.7) * duration
        length = rng.uniform(5.0, 30.0)
        segments = ((start, min(duration, start + length), rng.uniform(0.01, 0.05),
                     rng.uniform(1.0, 3.0)),)
    track = VitalTrack(
        beat_times=beats,
        resp_rate=resp_rate,
        resp_amplitude=resp_amp,
        heartbeat_amplitude=hb_amp,
        heartbeat_pulse_width=0.05,
        motion_segments=segments,
        resp_harmonics=tuple(harmonics),
        motion_seed=int(rng.integers(2**31)),
    )
    subject_range = rng.uniform(0.3, 1.5)
    n_clutter = rng.integers(2, 6)
    clutter = tuple(
        (float(rng.uniform(0.15, 3.0)), float(rng.uniform(0.3, 5.0))) for _ in range(n_clutter)
    )
    n_body = rng.integers(1, 4)
    body = tuple(
        (float(rng.uniform(-0.04, 0.1)), float(rng.uniform(0.15, 0.6))) for _ in range(n_body)
    )
    return SceneSpec(
        subject_range=float(subject_range),
        subject_angle=float(rng.uniform(-0.5, 0.5)),
        track=track,
        clutter=clutter,
        noise_snr_db=float(rng.uniform(*snr_db)),
        seed=int(rng.integers(2**63)) if seed is None else seed,
        duration=duration,
        subject_amplitude=1.0,
        body_scatterers=body,
    )
