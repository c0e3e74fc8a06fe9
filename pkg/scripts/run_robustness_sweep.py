#!/usr/bin/env python3
"""Robustness sweep: train each variant on clean few-shot samples, then
evaluate the same checkpoints on shifted, scaled and rotated test pages.

Usage: python scripts/run_robustness_sweep.py [--out runs/robustness]
       [--epochs 20000] [--variants vanilla,lager_nearest]
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from laygraph.gat import TrainConfig
from laygraph.harness import ExperimentConfig, load_experiment_corpus, report, run_experiment, save_result
from laygraph.manipulations import parse_manip

MANIPS = ("shift:a=20", "scale:sw=2,sh=2", "rotate:delta=8")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/robustness")
    parser.add_argument("--epochs", type=int, default=20000)
    parser.add_argument("--variants", default="vanilla,lager_nearest")
    parser.add_argument("--f", type=int, default=4)
    parser.add_argument("--seeds", default="0,1,2,3,4,5")
    args = parser.parse_args()

    base = ExperimentConfig(
        f=args.f,
        seeds=tuple(int(v) for v in args.seeds.split(",")),
        synth_docs=220,
        synth_train=20,
        train=TrainConfig(epochs=args.epochs),
        out_dir=args.out,
    )
    corpus = load_experiment_corpus(base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for variant in args.variants.split(","):
        for spec in MANIPS:
            cfg = dataclasses.replace(base, variant=variant, manip=parse_manip(spec))
            t0 = time.perf_counter()
            res = run_experiment(cfg, corpus)
            save_result(res, out / f"{variant}_{spec.split(':')[0]}.json")
            results.append(res)
            print(
                f"{variant:14s} {spec:18s} F1 {res.mean('f1') * 100:.2f}"
                f" -> {res.mean('f1', True) * 100:.2f} (diff {res.diff * 100:+.2f})"
                f" ({time.perf_counter() - t0:.0f}s)"
            )
    paths = report(results, out)
    print(f"wrote {paths['csv']} and {paths['md']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
