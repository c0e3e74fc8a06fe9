#!/usr/bin/env python3
"""Train and evaluate every model variant over a range of few-shot sizes
on the synthetic corpus and write the aggregate report.

Usage: python scripts/run_fewshot_matrix.py [--out runs/matrix]
       [--fs 2,3,4] [--epochs 8000] [--seeds 0,1,2,3,4,5]
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from laygraph.gat import TrainConfig
from laygraph.harness import ExperimentConfig, load_experiment_corpus, report, run_experiment, save_result


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/matrix")
    parser.add_argument("--fs", default="2,4")
    parser.add_argument("--epochs", type=int, default=8000)
    parser.add_argument("--seeds", default="0,1,2,3,4,5")
    parser.add_argument("--docs", type=int, default=220)
    parser.add_argument("--train-docs", type=int, default=20)
    args = parser.parse_args()

    fs = [int(v) for v in args.fs.split(",")]
    seeds = tuple(int(v) for v in args.seeds.split(","))
    base = ExperimentConfig(
        seeds=seeds,
        synth_docs=args.docs,
        synth_train=args.train_docs,
        train=TrainConfig(epochs=args.epochs),
        out_dir=args.out,
    )
    corpus = load_experiment_corpus(base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for variant in ("vanilla", "lager_nearest", "lager_angles"):
        for f in fs:
            cfg = dataclasses.replace(base, variant=variant, f=f)
            t0 = time.perf_counter()
            res = run_experiment(cfg, corpus)
            save_result(res, out / f"{variant}_f{f}.json")
            results.append(res)
            print(
                f"{variant:14s} f={f}: F1 {res.mean('f1') * 100:.2f}"
                f"±{res.std('f1') * 100:.2f} ({time.perf_counter() - t0:.0f}s)"
            )
    paths = report(results, out)
    print(f"wrote {paths['csv']} and {paths['md']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
