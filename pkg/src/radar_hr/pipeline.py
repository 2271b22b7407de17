"""Window-level processing shared by the CLI, corpus building and evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from radar_hr.baseline import THETA_PAR, baseline_hr
from radar_hr.config import RadarConfig, RangeProfileSeries
from radar_hr.frontend import FrontendConfig, PresenceReport, detect_presence
from radar_hr.micromotion import MicroMotionSet, extract_micromotions
from radar_hr.net.model import PseudoSpectrum, PulseNet, infer, pick_hr, prepare_input
from radar_hr.scene import SceneSpec, random_scene, synth_decimated, window_hr
from radar_hr.track import PROFILES, HrSeries, postprocess
from radar_hr.train import TrainingSet, label_spectrum, label_waveform

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Processing profile, model path and decision thresholds."""

    profile: str = "sleep"
    model: str | None = None
    theta_conf: float = 1.2
    theta_still: float = 2.5
    theta_par: float = THETA_PAR
    pfa: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        p = PROFILES[self.profile]
        if not p["window"] > p["step"] > 0:
            raise ValueError("window must exceed step")

    @property
    def window(self) -> float:
        return PROFILES[self.profile]["window"]

    @property
    def step(self) -> float:
        return PROFILES[self.profile]["step"]

    def frontend(self) -> FrontendConfig:
        return FrontendConfig(pfa=self.pfa, theta_still=self.theta_still)


def profile_time_offset(config: RadarConfig) -> float:
    """Mean chirp time within one decimated profile, relative to its first chirp."""
    last = 1.0 / config.burst_rate + (config.chirps_per_burst - 1) / config.chirp_rate
    return 0.5 * last


def window_slices(n_samples: int, sample_rate: float, window: float, step: float,
                  start_time: float = 0.0) -> list[tuple[int, int, float]]:
    """``(start, stop, emission time)`` of every full window; the first ends one window in."""
    length = int(round(window * sample_rate))
    hop = int(round(step * sample_rate))
    out = []
    start = 0
    while start + length <= n_samples:
        out.append((start, start + length, start_time + (start + length) / sample_rate))
        start += hop
    return out


@dataclass
class WindowResult:
    end_time: float
    presence: PresenceReport
    motions: MicroMotionSet | None = None

    @property
    def usable(self) -> bool:
        return self.motions is not None and bool(self.presence.still)


def analyze_window(series: RangeProfileSeries, f0: float, cfg: FrontendConfig = FrontendConfig(),
                   fallback_bin: int | None = None, end_time: float = float("nan")
                   ) -> WindowResult:
    """Presence/stillness gate, then micro-motions around the detected bin.

    ``fallback_bin`` (used only when building training data) replaces a
    missed detection.
    """
    report = detect_presence(series, cfg)
    bin_ = report.range_bin if report.present else fallback_bin
    if bin_ is None:
        return WindowResult(end_time, report)
    motions = extract_micromotions(series, bin_, f0)
    return WindowResult(end_time, report, motions)


def analyze_session(series: RangeProfileSeries, run: RunConfig,
                    radar: RadarConfig = RadarConfig()) -> list[WindowResult]:
    out = []
    for a, b, end in window_slices(series.n_samples, series.sample_rate, run.window, run.step,
                                   series.start_time):
        res = analyze_window(series.slice(a, b), radar.center_frequency, run.frontend(),
                             end_time=end)
        if res.presence.still is not True:
            res.motions = None
        out.append(res)
    return out


def estimate_series(windows: list[WindowResult], run: RunConfig, net: PulseNet | None = None,
                    method: str = "nn", batch_size: int = 32):
    """Raw (not post-processed) HR series plus per-window pseudo-spectra."""
    n = len(windows)
    bpm = np.full(n, np.nan)
    conf = np.full(n, np.nan)
    det = np.zeros(n, dtype=bool)
    spectra: list[PseudoSpectrum | None] = [None] * n
    usable = [i for i, w in enumerate(windows) if w.usable]
    if method == "nn":
        if net is None:
            raise ValueError("the network method needs a model")
        for i in range(0, len(usable), batch_size):
            chunk = usable[i:i + batch_size]
            specs = infer(net, np.stack([windows[j].motions.waveforms for j in chunk]))
            for j, s in zip(chunk, specs):
                est = pick_hr(s, theta_conf=run.theta_conf)
                bpm[j], conf[j], det[j] = est.bpm, est.confidence, True
                spectra[j] = s
    elif method == "bpf":
        for j in usable:
            rep = baseline_hr(windows[j].motions.waveforms, windows[j].motions.sample_rate,
                              run.theta_par)
            conf[j] = rep.par
            if rep.bpm is not None:
                bpm[j], det[j] = rep.bpm, True
    else:
        raise ValueError(f"unknown method {method!r}")
    times = np.array([w.end_time for w in windows])
    return HrSeries(times, bpm, conf, det, run.step, run.profile), spectra


def process_series(series: RangeProfileSeries, run: RunConfig, net: PulseNet | None = None,
                   method: str = "nn", radar: RadarConfig = RadarConfig()):
    """Full chain on a session: gate, extract, estimate, post-process.

    Returns ``(final series, raw series, window results)``.
    """
    windows = analyze_session(series, run, radar)
    raw, _ = estimate_series(windows, run, net, method)
    threshold = run.theta_conf if method == "nn" else run.theta_par
    return postprocess(raw, run.profile, threshold), raw, windows


# --------------------------------------------------------------------------
# training corpora

@dataclass
class CorpusWindow:
    scene_id: int
    end_time: float
    bpm: float
    motions: MicroMotionSet
    beat_times: tuple = field(default=(), repr=False)


def scene_windows(scene: SceneSpec, scene_id: int, profile: str = "sleep",
                  radar: RadarConfig = RadarConfig(), require_still: bool = True,
                  series: RangeProfileSeries | None = None) -> list[CorpusWindow]:
    """Micro-motion windows of one scene with reference HR; detection falls back to truth."""
    run = RunConfig(profile)
    series = series if series is not None else synth_decimated(scene, radar)
    truth_bin = int(round(scene.subject_range / series.range_bin_size))
    out = []
    for a, b, end in window_slices(series.n_samples, series.sample_rate, run.window, run.step):
        start = end - run.window
        hr = window_hr(scene.track.beat_times, start, end)
        if hr is None:
            continue
        if require_still and any(s < end and e > start for s, e, _, _ in
                                 scene.track.motion_segments):
            continue
        res = analyze_window(series.slice(a, b), radar.center_frequency, run.frontend(),
                             fallback_bin=truth_bin, end_time=end)
        out.append(CorpusWindow(scene_id, end, hr, res.motions, scene.track.beat_times))
    return out


def to_training_set(windows: list[CorpusWindow], radar: RadarConfig = RadarConfig()
                    ) -> TrainingSet:
    offset = profile_time_offset(radar)
    xs, lp, ls, bpm, ids, ends = [], [], [], [], [], []
    for w in windows:
        length = w.motions.waveforms.shape[1]
        t0 = w.end_time - length / w.motions.sample_rate + offset
        xs.append(prepare_input(w.motions.waveforms).astype(np.float32))
        lp.append(label_waveform(w.beat_times, length, w.motions.sample_rate, t0))
        ls.append(label_spectrum(w.bpm))
        bpm.append(w.bpm)
        ids.append(w.scene_id)
        ends.append(w.end_time)
    return TrainingSet(np.stack(xs), np.stack(lp).astype(np.float32), np.stack(ls),
                       np.array(bpm), np.array(ids), np.array(ends))


def synthetic_corpus(profile: str, n_scenes: int, seed: int, duration: float,
                     stress_fraction: float = 0.3, id_offset: int = 0,
                     snr_db: tuple[float, float] = (10.0, 25.0)) -> TrainingSet:
    """Training set from ``n_scenes`` random still scenes; scene ids start at ``id_offset``."""
    rng = np.random.default_rng(seed)
    windows = []
    for i in range(n_scenes):
        scene = random_scene(rng, profile, duration=duration, snr_db=snr_db,
                             harmonic_stress=bool(rng.random() < stress_fraction))
        windows += scene_windows(scene, id_offset + i, profile)
    return to_training_set(windows)
