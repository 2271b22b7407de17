"""Dependency-free SVG line charts of HR series against reference HR."""
from __future__ import annotations

import csv
import io
import time
from xml.sax.saxutils import escape

import numpy as np

from radar_hr.track import HrSeries, _runs

WIDTH, HEIGHT = 800, 320
MARGIN = 50


def _scale(lo: float, hi: float, a: float, b: float):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def _polylines(x, y, mask, sx, sy, css: str, tag: str) -> list[str]:
    out = []
    for a, b in _runs(mask):
        pts = " ".join(f"{sx(x[i]):.2f},{sy(y[i]):.2f}" for i in range(a, b))
        out.append(f'<polyline class="{css}" data-series="{tag}" points="{pts}"/>')
    return out


def render_svg(series: HrSeries, truth_bpm=None, title: str = "",
               fixed_epoch: float | None = None) -> str:
    """HR estimate (and optional truth) versus time; undetermined entries shaded.

    Every determined estimate is also a ``<circle class="est">`` marker so the
    data points can be recovered from the file.  The generation timestamp
    comment uses ``fixed_epoch`` when given.
    """
    t = series.time
    det = series.determined & np.isfinite(series.bpm)
    truth = None if truth_bpm is None else np.asarray(
        [np.nan if v is None else v for v in truth_bpm], dtype=float)
    values = [series.bpm[det]]
    if truth is not None:
        values.append(truth[np.isfinite(truth)])
    vals = np.concatenate(values) if any(v.size for v in values) else np.array([40.0, 120.0])
    lo, hi = float(np.floor(vals.min() - 5)), float(np.ceil(vals.max() + 5))
    t0, t1 = (float(t.min()), float(t.max())) if t.size else (0.0, 1.0)
    if t1 == t0:
        t0, t1 = t0 - 1, t1 + 1
    sx = _scale(t0, t1, MARGIN, WIDTH - MARGIN / 2)
    sy = _scale(lo, hi, HEIGHT - MARGIN, MARGIN / 2)
    stamp = time.time() if fixed_epoch is None else fixed_epoch
    half = series.step / 2
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<!-- generated {stamp:.0f} -->",
        "<style>.est{fill:none;stroke:#1f77b4;stroke-width:1.5}"
        ".truth{fill:none;stroke:#d62728;stroke-dasharray:4 3}"
        ".undet{fill:#999;fill-opacity:0.25}.axis{stroke:#333}"
        "text{font:11px sans-serif}circle.est{fill:#1f77b4;stroke:none}</style>",
        f'<text x="{WIDTH / 2}" y="14" text-anchor="middle">{escape(title)}</text>',
    ]
    for a, b in _runs(~det):
        x0 = float(sx(max(t[a] - half, t0)))
        x1 = float(sx(min(t[b - 1] + half, t1)))
        parts.append(f'<rect class="undet" x="{x0:.2f}" y="{MARGIN / 2}" '
                     f'width="{max(x1 - x0, 1.0):.2f}" height="{HEIGHT - 1.5 * MARGIN}"/>')
    parts.append(f'<line class="axis" x1="{MARGIN}" y1="{HEIGHT - MARGIN}" '
                 f'x2="{WIDTH - MARGIN / 2}" y2="{HEIGHT - MARGIN}"/>')
    parts.append(f'<line class="axis" x1="{MARGIN}" y1="{MARGIN / 2}" '
                 f'x2="{MARGIN}" y2="{HEIGHT - MARGIN}"/>')
    for v in np.linspace(lo, hi, 5):
        parts.append(f'<text x="{MARGIN - 4}" y="{float(sy(v)) + 4:.2f}" '
                     f'text-anchor="end">{v:.0f}</text>')
    for v in np.linspace(t0, t1, 5):
        parts.append(f'<text x="{float(sx(v)):.2f}" y="{HEIGHT - MARGIN + 16}" '
                     f'text-anchor="middle">{v:.0f}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle">time (s)</text>')
    parts.append(f'<text x="12" y="{HEIGHT / 2}" transform="rotate(-90 12 {HEIGHT / 2})" '
                 f'text-anchor="middle">HR (bpm)</text>')
    if truth is not None:
        parts += _polylines(t, truth, np.isfinite(truth), sx, sy, "truth", "truth")
    parts += _polylines(t, series.bpm, det, sx, sy, "est", "estimate")
    for i in np.flatnonzero(det):
        parts.append(f'<circle class="est" cx="{float(sx(t[i])):.2f}" '
                     f'cy="{float(sy(series.bpm[i])):.2f}" r="2.5" '
                     f'data-t="{t[i]:.3f}" data-bpm="{series.bpm[i]:.4f}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_csv(series: HrSeries, truth_bpm=None) -> str:
    """Data behind the figure: one row per entry with the reference HR when known."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "bpm", "determined", "truth_bpm"])
    truth = [None] * len(series) if truth_bpm is None else list(truth_bpm)
    for t, b, d, r in zip(series.time, series.bpm, series.determined, truth):
        w.writerow([f"{t:.3f}", f"{b:.4f}" if d else "", int(d),
                    "" if r is None or not np.isfinite(r) else f"{r:.4f}"])
    return buf.getvalue()
