"""Train the reference sleep model and compare it with the band-pass baseline on held-out scenes.

    python scripts/run_end_to_end.py --out runs/e2e
    python scripts/run_end_to_end.py --model runs/e2e/sleep.rvm --per-scene
"""
import argparse
import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

from radar_hr.evaluation import (
    METHOD_NAMES,
    ReferenceTraining,
    evaluate_scenes,
    heldout_scenes,
    train_reference_model,
)
from radar_hr.net.model import ModelManifest
from radar_hr.pipeline import RunConfig
from radar_hr.track import MetricsError, metrics_table_csv


def _table(results, stress_only):
    rows = {}
    for m, res in results.items():
        try:
            rows[METHOD_NAMES[m]] = res.report(stress_only)
        except MetricsError:
            pass
    return metrics_table_csv(rows)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/e2e"))
    p.add_argument("--model", type=Path, help="skip training and evaluate this manifest")
    p.add_argument("--train-scenes", type=int, default=ReferenceTraining.train_scenes)
    p.add_argument("--epochs", type=int, default=ReferenceTraining.epochs)
    p.add_argument("--lr", type=float, default=ReferenceTraining.lr)
    p.add_argument("--schedule", default=ReferenceTraining.schedule)
    p.add_argument("--heldout-scenes", type=int, default=40)
    p.add_argument("--heldout-seed", type=int, default=20261015)
    p.add_argument("--per-scene", action="store_true", help="also print one line per scene")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    if args.model:
        manifest = ModelManifest.load(args.model)
    else:
        cfg = ReferenceTraining(train_scenes=args.train_scenes, epochs=args.epochs, lr=args.lr,
                                schedule=args.schedule)
        manifest, _, n = train_reference_model(cfg, log_path=args.out / "train.jsonl")
        manifest.save(args.out / "sleep.rvm")
        (args.out / "training.json").write_text(json.dumps({**asdict(cfg), "n_windows": n},
                                                           indent=1))
    net = manifest.to_net()
    scenes = heldout_scenes(args.heldout_scenes, args.heldout_seed)
    results = evaluate_scenes(scenes, net, RunConfig("sleep"))
    for label, stress in (("all held-out windows", False), ("harmonic-stress subset", True)):
        print(f"# {label}")
        print(_table(results, stress), end="")
    if args.per_scene:
        print("# per scene: index, stress, snr dB, range m, pipeline MAE, baseline MAE")
        for i, item in enumerate(scenes):
            res = evaluate_scenes([item], net, RunConfig("sleep"))
            maes = []
            for m in ("nn", "bpf"):
                try:
                    maes.append(f"{res[m].report().mae:.2f}")
                except MetricsError:
                    maes.append("-")
            print(i, int(item.harmonic_stress), f"{item.scene.noise_snr_db:.1f}",
                  f"{item.scene.subject_range:.2f}", *maes)
    print(f"# {time.perf_counter() - start:.0f} s")


if __name__ == "__main__":
    main()
