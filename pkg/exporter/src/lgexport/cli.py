"""Command line: lgexport export --corpus DIR --model ID --out DIR [--device D]."""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, export
from .records import RecordError


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgexport")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="write per-document .lgem embeddings")
    p.add_argument("--corpus", required=True, help="directory of internal annotation records")
    p.add_argument("--model", required=True, help="model identifier or local model directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        manifest = export(args.corpus, args.model, args.out, device=args.device)
    except (ExportError, RecordError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    line = f"exported {len(manifest.documents)} documents (d={manifest.hidden_size})"
    if manifest.errors:
        line += f", skipped {len(manifest.errors)}"
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
