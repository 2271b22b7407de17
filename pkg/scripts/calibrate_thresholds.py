"""Sweep the stillness, baseline-PAR and network-confidence thresholds on synthetic data.

    python scripts/calibrate_thresholds.py still --scenes 80
    python scripts/calibrate_thresholds.py par --trials 1000
    python scripts/calibrate_thresholds.py conf --model runs/e2e/sleep.rvm
"""
import argparse

import numpy as np

from radar_hr.baseline import baseline_hr
from radar_hr.evaluation import evaluate_scenes, heldout_scenes
from radar_hr.frontend import FrontendConfig, clutter_filter, stillness
from radar_hr.net.model import ModelManifest
from radar_hr.pipeline import RunConfig, window_slices
from radar_hr.scene import random_scene, synth_decimated


def still(args):
    """Block-minimum Doppler ratio of still windows against windows that overlap motion."""
    rng = np.random.default_rng(args.seed)
    cfg = FrontendConfig()
    for profile in ("sleep", "meditation"):
        run = RunConfig(profile)
        ratios = {True: [], False: []}
        for i in range(args.scenes):
            scene = random_scene(rng, profile, duration=120.0, motion=i % 2 == 1)
            series = clutter_filter(synth_decimated(scene))
            b = int(round(scene.subject_range / series.range_bin_size))
            for a, e, end in window_slices(series.n_samples, series.sample_rate, run.window,
                                           run.step):
                moving = any(s < end and t > end - run.window
                             for s, t, _, _ in scene.track.motion_segments)
                ratios[moving].append(stillness(series.slice(a, e), b, cfg,
                                                cfg.still_block_seconds)[0])
        s, m = np.array(ratios[False]), np.array(ratios[True])
        print(f"# {profile}: {s.size} still, {m.size} motion windows")
        print("theta_still,still_pass,motion_reject")
        for th in args.grid or (1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 10.0):
            print(f"{th},{np.mean(s >= th):.3f},{np.mean(m < th):.3f}")


def par(args):
    """Fraction of 16-waveform white-noise windows the baseline rejects."""
    rng = np.random.default_rng(args.seed)
    for profile, length in (("sleep", 900), ("meditation", 240)):
        pars = np.array([baseline_hr(rng.standard_normal((16, length)), theta_par=np.inf).par
                         for _ in range(args.trials)])
        print(f"# {profile} ({length} samples, {args.trials} trials)")
        print("theta_par,noise_rejected")
        for th in args.grid or (2.0, 3.0, 3.5, 4.0, 4.5, 5.0):
            print(f"{th},{np.mean(pars < th):.3f}")


def conf(args):
    """Held-out MAE and recall of the network pipeline across confidence thresholds."""
    net = ModelManifest.load(args.model).to_net()
    scenes = heldout_scenes(args.scenes, args.seed)
    print("theta_conf,mae,recall")
    for th in args.grid or (1.0, 1.1, 1.2, 1.5, 2.0, 3.0):
        rep = evaluate_scenes(scenes, net, RunConfig("sleep", theta_conf=th), ("nn",))["nn"]
        r = rep.report()
        print(f"{th},{r.mae:.3f},{r.recall:.3f}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("which", choices=("still", "par", "conf"))
    p.add_argument("--scenes", type=int, default=80)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--model", help="manifest for the confidence sweep")
    p.add_argument("--grid", type=float, nargs="+")
    args = p.parse_args()
    if args.which == "conf" and not args.model:
        p.error("conf needs --model")
    {"still": still, "par": par, "conf": conf}[args.which](args)


if __name__ == "__main__":
    main()
