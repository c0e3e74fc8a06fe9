"""Minimal reader for the toolkit's internal annotation records (schema
version 1). Only the fields the exporter needs are decoded: document id,
page size and per-word text plus box. Boxes may be 4-number envelopes or
8-number corner lists; both are reduced to an axis-aligned envelope."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class Word:
    text: str
    box: tuple[float, float, float, float]  # x0, y0, x1, y1


@dataclass(frozen=True)
class Record:
    doc_id: str
    width: float
    height: float
    words: tuple[Word, ...]


def _envelope(numbers) -> tuple[float, float, float, float]:
    values = [float(v) for v in numbers]
    if len(values) == 4:
        x0, y0, x1, y1 = values
    elif len(values) == 8:
        xs, ys = values[0::2], values[1::2]
        x0, y0, x1, y1 = min(xs), min(ys), max(xs), max(ys)
    else:
        raise RecordError(f"box needs 4 or 8 numbers, got {len(values)}")
    return x0, y0, x1, y1


def read_record(path) -> Record:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RecordError(f"{path}: {exc}") from exc
    if data.get("schema_version") != 1:
        raise RecordError(f"{path}: unsupported schema_version {data.get('schema_version')!r}")
    words = tuple(
        Word(str(w.get("text", "")), _envelope(w["box"])) for w in data.get("words", [])
    )
    return Record(str(data.get("id", Path(path).stem)), float(data["width"]),
                  float(data["height"]), words)


def read_corpus_dir(corpus_dir) -> list[Record]:
    root = Path(corpus_dir)
    if not root.is_dir():
        raise RecordError(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix == ".json" and p.name != "manifest.json")
    return [read_record(p) for p in files]
