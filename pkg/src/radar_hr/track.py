"""HR series post-processing and accuracy metrics."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

PROFILES = {
    # window s, step s, median filter s, gaussian filter s
    "sleep": {"window": 60.0, "step": 15.0, "median": 600.0, "gaussian": 60.0},
    "meditation": {"window": 16.0, "step": 4.0, "median": 20.0, "gaussian": 20.0},
}


class AlignmentError(ValueError):
    pass


class MetricsError(ValueError):
    pass


def filter_lengths(profile: str) -> tuple[int, int]:
    """Median and Gaussian filter lengths in samples for a profile."""
    p = PROFILES[profile]
    return int(round(p["median"] / p["step"])), int(round(p["gaussian"] / p["step"]))


@dataclass(eq=False)
class HrSeries:
    """Timestamped HR estimates.  ``time`` is the emission time (window end)."""

    time: np.ndarray
    bpm: np.ndarray
    confidence: np.ndarray
    determined: np.ndarray
    step: float
    profile: str = "sleep"

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.bpm = np.asarray(self.bpm, dtype=float)
        self.confidence = np.asarray(self.confidence, dtype=float)
        self.determined = np.asarray(self.determined, dtype=bool)
        if self.time.size > 1:
            d = np.diff(self.time)
            if np.any(d <= 0) or not np.allclose(d, self.step, atol=1e-6):
                raise ValueError("HR series times must increase with a uniform step")

    def __len__(self):
        return self.time.size

    @property
    def window_center(self) -> np.ndarray:
        return self.time - PROFILES[self.profile]["window"] / 2

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "window_center", "bpm", "confidence", "determined"])
        for t, c, b, conf, det in zip(self.time, self.window_center, self.bpm,
                                      self.confidence, self.determined):
            w.writerow([f"{t:.3f}", f"{c:.3f}", f"{b:.4f}" if det else "",
                        "inf" if np.isinf(conf) else f"{conf:.4f}", int(det)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, profile: str = "sleep") -> "HrSeries":
        rows = list(csv.DictReader(io.StringIO(text)))
        t = [float(r["time"]) for r in rows]
        step = t[1] - t[0] if len(t) > 1 else PROFILES[profile]["step"]
        return cls(
            t,
            [float(r["bpm"]) if r["bpm"] else np.nan for r in rows],
            [float(r["confidence"]) if r["confidence"] else np.nan for r in rows],
            [r["determined"] == "1" for r in rows],
            round(step, 6), profile,
        )


# --------------------------------------------------------------------------
# filters

def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive True values."""
    m = np.concatenate([[False], mask.astype(bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(int)))
    return list(zip(edges[::2], edges[1::2]))


def median_filter(x: np.ndarray, length: int) -> np.ndarray:
    """Centred running median with reflect padding; even lengths average the two middle values."""
    x = np.asarray(x, dtype=float)
    if length <= 1 or x.size == 0:
        return x.copy()
    left, right = length // 2, length - 1 - length // 2
    xp = np.pad(x, (left, right), mode="symmetric") if x.size > 1 else np.full(x.size + length - 1, x[0])
    win = np.lib.stride_tricks.sliding_window_view(xp, length)
    return np.median(win, axis=1)


def gaussian_kernel(length: int) -> np.ndarray:
    sigma = length / 3.0
    k = np.arange(-length, length + 1)
    g = np.exp(-0.5 * (k / sigma) ** 2)
    return g / g.sum()


def gaussian_smooth(x: np.ndarray, length: int) -> np.ndarray:
    """Gaussian smoothing (sigma = length/3, support +-length) with reflect padding."""
    x = np.asarray(x, dtype=float)
    if length <= 0 or x.size == 0:
        return x.copy()
    g = gaussian_kernel(length)
    xp = np.pad(x, length, mode="symmetric") if x.size > 1 else np.full(x.size + 2 * length, x[0])
    return np.convolve(xp, g, mode="valid")


def postprocess(raw: HrSeries, profile: str | None = None, theta_conf: float = 1.2) -> HrSeries:
    """Reject low-confidence estimates, bridge short gaps, then median and Gaussian smoothing.

    Gaps of rejected estimates no longer than the median filter are linearly
    interpolated from their neighbours; longer gaps stay undetermined.
    Windows that never produced an estimate (NaN confidence: subject absent
    or moving) are not bridged.  Smoothing runs separately over each
    determined stretch.
    """
    profile = profile or raw.profile
    n = len(raw)
    if n == 0:
        return HrSeries([], [], [], [], raw.step, profile)
    med_len, gauss_len = filter_lengths(profile)
    accepted = raw.determined & np.isfinite(raw.bpm) & (raw.confidence >= theta_conf)
    bpm = np.where(accepted, raw.bpm, np.nan)
    determined = accepted.copy()
    if accepted.any():
        idx = np.flatnonzero(accepted)
        gated = np.isnan(raw.confidence)
        for a, b in _runs(~accepted):
            if b - a <= med_len and not gated[a:b].any():
                bpm[a:b] = np.interp(np.arange(a, b), idx, raw.bpm[idx])
                determined[a:b] = True
    out = np.full(n, np.nan)
    for a, b in _runs(determined):
        out[a:b] = gaussian_smooth(median_filter(bpm[a:b], med_len), gauss_len)
    return HrSeries(raw.time.copy(), out, raw.confidence.copy(), determined, raw.step, profile)


# --------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class MetricsReport:
    recall: float
    mae: float
    mape: float
    ae95: float
    ape95: float
    r2: float
    n_samples: int

    COLUMNS = ("mae", "ae95", "mape", "ape95", "r2", "recall", "n_samples")

    def to_dict(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> list[str]:
        return [repr(float(getattr(self, c))) if c != "n_samples" else str(self.n_samples)
                for c in self.COLUMNS]


def align(series: HrSeries, truth_times, truth_bpm, atol: float = 1e-3):
    """Match series entries to reference windows by emission time.

    Returns ``(estimates, determined, truth)`` restricted to windows with a
    defined reference HR.  Raises :class:`AlignmentError` on any time mismatch.
    """
    truth_times = np.asarray(truth_times, dtype=float)
    truth_bpm = np.asarray([np.nan if b is None else b for b in truth_bpm], dtype=float)
    if truth_times.shape != series.time.shape or not np.allclose(
            truth_times, series.time, atol=atol):
        raise AlignmentError(
            f"series has {len(series)} entries at {series.time[:3]}..., "
            f"truth has {truth_times.size} at {truth_times[:3]}..."
        )
    ok = np.isfinite(truth_bpm)
    return series.bpm[ok], series.determined[ok], truth_bpm[ok]


def recall(determined: np.ndarray) -> float:
    determined = np.asarray(determined, dtype=bool)
    if determined.size == 0:
        raise MetricsError("recall undefined for an empty series")
    return float(determined.sum() / determined.size)


def error_metrics(estimates, truth, determined=None) -> MetricsReport:
    """MAE, MAPE, 95th-percentile AE/APE (linear interpolation) and R^2.

    Undetermined samples are excluded from the error terms and only lower
    the recall.  R^2 may be negative.
    """
    est = np.asarray(estimates, dtype=float)
    ref = np.asarray(truth, dtype=float)
    det = np.ones(est.shape, dtype=bool) if determined is None else np.asarray(determined, bool)
    rec = recall(det)
    e, r = est[det], ref[det]
    if e.size == 0:
        raise MetricsError("no determined samples")
    ae = np.abs(r - e)
    ape = ae / r
    ss_tot = np.sum((r - r.mean()) ** 2)
    if ss_tot == 0:
        raise MetricsError("R^2 undefined for constant reference HR")
    return MetricsReport(
        recall=rec,
        mae=float(ae.mean()),
        mape=float(ape.mean()),
        ae95=float(np.percentile(ae, 95)),
        ape95=float(np.percentile(ape, 95)),
        r2=float(1 - np.sum(ae**2) / ss_tot),
        n_samples=int(e.size),
    )


def metrics_table_csv(rows: dict[str, MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", *MetricsReport.COLUMNS])
    for name, rep in rows.items():
        w.writerow([name, *rep.csv_row()])
    return buf.getvalue()
