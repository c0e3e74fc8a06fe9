"""Command-line front end.

Subcommands: train, eval, perturb, graph, synth, report. Experiment
options come from an optional flat key=value config file, overridable
by a flag of the same name. Exits 0 on success; on failure prints one
machine-parsable ``error: <kind>: <message>`` line to stderr and exits 1.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .annotation_io import detect_format, parse_cord, parse_funsd, read_internal, write_internal
from .errors import LaygraphError
from .gat import save_checkpoint
from .graphs import adjacency_to_dot, adjacency_to_json, angle_bundle, nearest_bundle
from .harness import (
    CONFIG_KEYS,
    ExperimentConfig,
    build_config,
    load_experiment_corpus,
    load_result,
    read_config_file,
    report,
    run_experiment,
    save_result,
)
from .manipulations import parse_manip
from .synth import make_synthetic_corpus


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    for key in CONFIG_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}")


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    kv: dict[str, str] = {}
    if args.config:
        kv.update(read_config_file(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            kv[key] = value
    return build_config(kv)


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    corpus = load_experiment_corpus(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .harness import sample_fewshot, train_tagger

    for seed in cfg.seeds:
        sample = sample_fewshot(corpus.train, cfg.f, seed)
        tagger, opt_state = train_tagger(cfg, cfg.variant, sample, corpus.label_set, seed,
                                         with_state=True)
        save_checkpoint(
            out / f"{cfg.variant}_f{cfg.f}_seed{seed}.ckpt",
            tagger,
            opt_state,
            extra_config={"k": cfg.k, "theta": cfg.theta, "f": cfg.f, "seed": seed},
        )
    result = run_experiment(cfg, corpus)
    save_result(result, out / f"{cfg.variant}_f{cfg.f}.json")
    print(f"trained {len(cfg.seeds)} seeds; mean F1 {result.mean('f1') * 100:.2f}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_result(result, out / f"{cfg.variant}_f{cfg.f}.json")
    report([result], out)
    if result.label_counts:
        from .tagging import PRF, metrics_csv

        table = {k: PRF.from_counts(*v) for k, v in result.label_counts.items()}
        totals = [sum(v[i] for v in result.label_counts.values()) for i in range(3)]
        (out / "metrics.csv").write_text(
            metrics_csv(PRF.from_counts(*totals), table), encoding="utf-8"
        )
    line = f"{cfg.variant} f={cfg.f}: F1 {result.mean('f1') * 100:.2f}±{result.std('f1') * 100:.2f}"
    if result.diff is not None:
        line += f" diff {result.diff * 100:.2f}"
    print(line)
    return 0


def _cmd_perturb(args) -> int:
    cfg = _config_from_args(args)
    manips = args.manips or ["shift:a=20", "scale:sw=2,sh=2", "rotate:delta=8"]
    corpus = load_experiment_corpus(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for spec in manips:
        import dataclasses

        run_cfg = dataclasses.replace(cfg, manip=parse_manip(spec))
        result = run_experiment(run_cfg, corpus)
        save_result(result, out / f"{cfg.variant}_f{cfg.f}_{spec.split(':')[0]}.json")
        results.append(result)
        print(f"{cfg.variant} f={cfg.f} {spec}: diff {result.diff * 100:.2f}")
    report(results, out)
    return 0


def _cmd_graph(args) -> int:
    raw = Path(args.input).read_text(encoding="utf-8")
    fmt = detect_format(raw)
    parser = {"funsd": parse_funsd, "cord": parse_cord}.get(fmt)
    doc = parser(raw, Path(args.input).stem) if parser else read_internal(raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "nearest":
        bundle = nearest_bundle(doc, args.k)
    else:
        bundle = angle_bundle(doc, args.k, args.theta)
    for i, matrix in enumerate(bundle.matrices):
        alpha = bundle.angles[i] if bundle.angles else None
        tag = f"alpha{alpha:g}" if alpha is not None else "nearest"
        (out / f"{doc.id}_{tag}.dot").write_text(adjacency_to_dot(matrix), encoding="utf-8")
        (out / f"{doc.id}_{tag}.json").write_text(
            adjacency_to_json(matrix, bundle.mode, args.k, alpha), encoding="utf-8"
        )
    print(f"wrote {len(bundle.matrices)} graph(s) for {doc.id} to {out}")
    return 0


def _cmd_synth(args) -> int:
    corpus = make_synthetic_corpus(args.seed, args.docs, args.tokens, n_train=args.train_docs)
    out = Path(args.out)
    for split, docs in (("train", corpus.train), ("test", corpus.test)):
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for doc in docs:
            (split_dir / f"{doc.id}.json").write_text(write_internal(doc), encoding="utf-8")
    print(f"wrote {len(corpus.train)} train / {len(corpus.test)} test documents to {out}")
    return 0


def _cmd_report(args) -> int:
    results = [load_result(p) for p in args.results]
    paths = report(results, args.out)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laygraph")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train few-shot taggers and save checkpoints")
    _add_config_flags(p_train)
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="train+evaluate one experiment cell")
    _add_config_flags(p_eval)
    p_eval.set_defaults(fn=_cmd_eval)

    p_perturb = sub.add_parser("perturb", help="robustness sweep over manipulations")
    _add_config_flags(p_perturb)
    p_perturb.add_argument("--manips", nargs="*", help="manipulation specs (default: the standard three)")
    p_perturb.set_defaults(fn=_cmd_perturb)

    p_graph = sub.add_parser("graph", help="dump DOT/JSON graphs for one document")
    p_graph.add_argument("--input", required=True)
    p_graph.add_argument("--mode", choices=["nearest", "angles"], default="nearest")
    p_graph.add_argument("--k", type=int, default=4)
    p_graph.add_argument("--theta", type=float, default=60.0)
    p_graph.add_argument("--out", required=True)
    p_graph.set_defaults(fn=_cmd_graph)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--docs", type=int, default=220)
    p_synth.add_argument("--tokens", type=int, default=26)
    p_synth.add_argument("--train-docs", type=int, default=None)
    p_synth.set_defaults(fn=_cmd_synth)

    p_report = sub.add_parser("report", help="assemble result JSONs into CSV/Markdown")
    p_report.add_argument("--results", nargs="+", required=True)
    p_report.add_argument("--out", required=True)
    p_report.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LaygraphError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
