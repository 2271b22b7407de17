"""Command line: ``simulate | process | train | eval | plot``.

Exit codes: 0 success, 2 input error, 3 model error, 4 alignment error.
The ``RVS_LOG`` environment variable sets the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from radar_hr.config import RadarConfig
from radar_hr.evaluation import METHOD_NAMES
from radar_hr.frontend import InputError
from radar_hr.io import (
    SessionContainer,
    SessionError,
    labels_path,
    read_labels,
    read_session,
    write_labels,
    write_session,
)
from radar_hr.net.model import ManifestError, ModelManifest
from radar_hr.pipeline import RunConfig, analyze_session, estimate_series, synthetic_corpus
from radar_hr.plot import plot_csv, render_svg
from radar_hr.scene import SceneError, SceneSpec, gen_ground_truth, random_scene, synth_adc, synth_decimated
from radar_hr.track import (
    PROFILES,
    AlignmentError,
    HrSeries,
    MetricsError,
    align,
    error_metrics,
    metrics_table_csv,
    postprocess,
)

log = logging.getLogger("radar_hr")

EXIT_OK, EXIT_INPUT, EXIT_MODEL, EXIT_ALIGN = 0, 2, 3, 4


class ModelError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# helpers

def make_labels(scene: SceneSpec, radar: RadarConfig) -> dict:
    windows = {}
    for name, p in PROFILES.items():
        gt = gen_ground_truth(scene, (p["window"], p["step"]), radar)
        windows[name] = [
            {"time": float(end), "center": float(c), "bpm": hr, "still": bool(s)}
            for (c, hr), end, s in zip(gt.window_hrs, gt.window_ends, gt.still_mask)
        ]
    return {
        "scene": scene.to_dict(),
        "subject_range": scene.subject_range,
        "beat_times": list(scene.track.beat_times),
        "resp_rate": scene.track.resp_rate,
        "resp_amplitude": scene.track.resp_amplitude,
        "motion_segments": [list(s) for s in scene.track.motion_segments],
        "windows": windows,
    }


def truth_for(labels: dict, profile: str) -> tuple[np.ndarray, list]:
    rows = labels["windows"][profile]
    return np.array([r["time"] for r in rows]), [r["bpm"] for r in rows]


def load_model(path) -> ModelManifest:
    if path is None:
        raise ModelError("the network method needs --model")
    try:
        return ModelManifest.load(path)
    except FileNotFoundError as exc:
        raise ModelError(f"model manifest not found: {path}") from exc
    except (ManifestError, KeyError, json.JSONDecodeError) as exc:
        raise ModelError(f"unreadable model manifest {path}: {exc}") from exc


def run_session(path, run: RunConfig, methods: tuple[str, ...]) -> dict:
    """Process one session file with each method; returns raw and final series."""
    session = read_session(path)
    series = session.to_series()
    windows = analyze_session(series, run, session.config)
    out = {}
    for method in methods:
        net = None
        if method == "nn":
            manifest = load_model(run.model)
            net = manifest.to_net()
            if net.input_length != int(round(run.window * series.sample_rate)):
                raise ModelError(f"model expects {net.input_length}-sample windows, profile "
                                 f"{run.profile} gives {run.window * series.sample_rate:.0f}")
        raw, spectra = estimate_series(windows, run, net, method)
        threshold = run.theta_conf if method == "nn" else run.theta_par
        out[method] = {"raw": raw, "final": postprocess(raw, run.profile, threshold),
                       "spectra": spectra, "windows": windows}
    return out


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _run_config(args) -> RunConfig:
    return RunConfig(profile=args.profile, model=getattr(args, "model", None),
                     theta_conf=args.theta_conf, theta_still=args.theta_still,
                     theta_par=args.theta_par, pfa=args.pfa, seed=args.seed or 0)


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    radar = RadarConfig.from_json(Path(args.radar).read_text()) if args.radar else RadarConfig()
    if args.spec:
        try:
            scene = SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except (TypeError, KeyError, json.JSONDecodeError) as exc:
            raise InputError(f"malformed scene spec {args.spec}: {exc}") from exc
        if args.seed is not None and args.seed != scene.seed:
            scene = SceneSpec.from_dict({**scene.to_dict(), "seed": args.seed})
    else:
        rng = np.random.default_rng(args.seed)
        scene = random_scene(rng, args.profile, duration=args.duration,
                             harmonic_stress=args.harmonic_stress, motion=args.motion,
                             seed=args.seed)
    if args.adc:
        session = SessionContainer.from_cube(synth_adc(scene, radar))
    else:
        session = SessionContainer.from_series(synth_decimated(scene, radar), radar)
    write_session(args.out, session)
    write_labels(labels_path(args.out), make_labels(scene, radar))
    log.info("wrote %s (%s, dims %s)", args.out, session.kind, session.data.shape)
    return EXIT_OK


def _process_one(job):
    path, run, method, out, diag = job
    res = run_session(path, run, (method,))[method]
    Path(out).write_text(res["final"].to_csv())
    if diag:
        d = Path(diag)
        d.mkdir(parents=True, exist_ok=True)
        stem = Path(path).stem
        (d / f"{stem}.raw.csv").write_text(res["raw"].to_csv())
        rows = ["time,present,range_bin,still,stillness_ratio"]
        for w in res["windows"]:
            p = w.presence
            rows.append(f"{w.end_time:.3f},{int(p.present)},"
                        f"{'' if p.range_bin is None else p.range_bin},"
                        f"{'' if p.still is None else int(p.still)},"
                        f"{'' if p.stillness_ratio is None else f'{p.stillness_ratio:.4f}'}")
        (d / f"{stem}.presence.csv").write_text("\n".join(rows) + "\n")
        if method == "nn":
            spec_rows = [",".join(["time"] + [f"b{k}" for k in range(189)])]
            for w, s in zip(res["windows"], res["spectra"]):
                if s is not None:
                    spec_rows.append(",".join([f"{w.end_time:.3f}"] +
                                              [f"{v:.6g}" for v in s.probs]))
            (d / f"{stem}.spectra.csv").write_text("\n".join(spec_rows) + "\n")
    return out


def cmd_process(args) -> int:
    run = _run_config(args)
    if args.method == "nn":
        load_model(run.model)
    sessions = args.sessions
    if args.out and len(sessions) > 1:
        raise InputError("--out takes a single session; use --out-dir for several")
    jobs = []
    for s in sessions:
        out = args.out or str(Path(args.out_dir or Path(s).parent) /
                              f"{Path(s).stem}.{args.method}.csv")
        jobs.append((s, run, args.method, out, args.diagnostics))
    for out in _map(_process_one, jobs, args.jobs):
        log.info("wrote %s", out)
    return EXIT_OK


def cmd_train(args) -> int:
    from radar_hr.train import TrainConfig, train

    args.seed = args.seed or 0
    duration = args.scene_duration or PROFILES[args.profile]["window"] + 2 * PROFILES[
        args.profile]["step"]
    tr = synthetic_corpus(args.profile, args.scenes, args.seed, duration,
                          args.stress_fraction, 0)
    va = synthetic_corpus(args.profile, args.val_scenes, args.seed + 1, duration,
                          args.stress_fraction, 10**6)
    cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                      patience=args.patience, lam=args.lam, seed=args.seed)
    manifest, _ = train(tr, va, cfg, profile=args.profile, log_path=args.log)
    manifest.save(args.out)
    log.info("saved %s (best epoch %s)", args.out, manifest.meta.get("best_epoch"))
    return EXIT_OK


def _eval_one(job):
    path, run, methods = job
    labels = read_labels(labels_path(path))
    res = run_session(path, run, methods)
    return labels, {m: r["final"] for m, r in res.items()}


def _pooled_report(pairs) -> object:
    est, det, ref = [], [], []
    for series, (times, bpm) in pairs:
        e, d, r = align(series, times, bpm)
        est.append(e)
        det.append(d)
        ref.append(r)
    return error_metrics(np.concatenate(est), np.concatenate(ref), np.concatenate(det))


def cmd_eval(args) -> int:
    run = _run_config(args)
    rows = {}
    if args.series:
        if not args.labels:
            raise InputError("--series needs --labels")
        truth = truth_for(read_labels(args.labels), args.profile)
        for item in args.series:
            name, _, path = item.partition("=")
            if not path:
                name, path = Path(item).stem, item
            series = HrSeries.from_csv(Path(path).read_text(), args.profile)
            rows[name] = _pooled_report([(series, truth)])
    else:
        if not args.sessions:
            raise InputError("eval needs sessions or --series")
        methods = tuple(args.methods)
        if "nn" in methods:
            load_model(run.model)
        results = _map(_eval_one, [(s, run, methods) for s in args.sessions], args.jobs)
        for m in methods:
            rows[METHOD_NAMES[m]] = _pooled_report(
                [(out[m], truth_for(labels, args.profile)) for labels, out in results])
    table = metrics_table_csv(rows)
    report = json.dumps({k: v.to_dict() for k, v in rows.items()}, sort_keys=True, indent=1)
    if args.out_csv:
        Path(args.out_csv).write_text(table)
    if args.out_json:
        Path(args.out_json).write_text(report + "\n")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_plot(args) -> int:
    series = HrSeries.from_csv(Path(args.series).read_text(), args.profile)
    truth = None
    if args.labels:
        times, bpm = truth_for(read_labels(args.labels), args.profile)
        align(series, times, bpm)
        truth = bpm
    svg = render_svg(series, truth, title=args.title or Path(args.series).stem,
                     fixed_epoch=args.fixed_epoch)
    Path(args.out).write_text(svg)
    Path(args.out).with_suffix(".csv").write_text(plot_csv(series, truth))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def _add_thresholds(p):
    p.add_argument("--theta-conf", type=float, default=RunConfig.theta_conf)
    p.add_argument("--theta-still", type=float, default=RunConfig.theta_still)
    p.add_argument("--theta-par", type=float, default=RunConfig.theta_par)
    p.add_argument("--pfa", type=float, default=RunConfig.pfa)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", choices=sorted(PROFILES), default="sleep")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="sessions processed in parallel")
    common.add_argument("--fixed-epoch", type=float, default=None,
                        help="timestamp written into generated figures")
    parser = argparse.ArgumentParser(prog="radar-hr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize a session and its labels")
    p.add_argument("spec", nargs="?", help="scene spec JSON; omit for a random scene")
    p.add_argument("--out", required=True)
    p.add_argument("--radar", help="radar config JSON")
    p.add_argument("--adc", action="store_true", help="store raw ADC samples")
    p.add_argument("--duration", type=float, default=300.0)
    p.add_argument("--harmonic-stress", action="store_true")
    p.add_argument("--motion", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", parents=[common], help="estimate HR series from sessions")
    p.add_argument("sessions", nargs="+")
    p.add_argument("--model")
    p.add_argument("--method", choices=("nn", "bpf"), default="nn")
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--diagnostics", help="directory for per-window CSV dumps")
    _add_thresholds(p)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("train", parents=[common], help="train a model on a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--val-scenes", type=int, default=20)
    p.add_argument("--scene-duration", type=float, default=None)
    p.add_argument("--stress-fraction", type=float, default=0.3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--log", help="JSON-lines training log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="metrics for pipeline and baseline")
    p.add_argument("sessions", nargs="*")
    p.add_argument("--model")
    p.add_argument("--methods", nargs="+", choices=("nn", "bpf"), default=["nn", "bpf"])
    p.add_argument("--series", nargs="+", help="NAME=CSV HR series to score instead")
    p.add_argument("--labels")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    _add_thresholds(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common], help="SVG of an HR series with truth overlay")
    p.add_argument("series")
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RVS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelError as exc:
        log.error("%s", exc)
        return EXIT_MODEL
    except AlignmentError as exc:
        log.error("%s", exc)
        return EXIT_ALIGN
    except (SessionError, InputError, SceneError, MetricsError, FileNotFoundError,
            ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
