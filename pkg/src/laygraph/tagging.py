"""IOBES tag conversion and entity-level precision/recall/F1.

Span extraction follows the default (non-strict) conlleval chunking
rules, so arbitrary model output is repaired rather than rejected: an
I- or E- tag with no live chunk opens one, a B- or S- tag always opens
one, and label changes close the running chunk.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .errors import AlignmentError, ValidationError
from .geometry import EntitySpan

PREFIXES = ("B", "I", "E", "S")


def build_tag_vocab(label_set) -> list[str]:
    """Tag strings in a fixed order: O first, then B/I/E/S per label."""
    tags = ["O"]
    for label in label_set:
        tags.extend(f"{p}-{label}" for p in PREFIXES)
    return tags


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    true_positives: int
    pred_count: int
    gold_count: int

    @classmethod
    def from_counts(cls, tp: int, pred: int, gold: int) -> PRF:
        if pred == 0:
            precision = 1.0 if gold == 0 else 0.0
        else:
            precision = tp / pred
        if gold == 0:
            recall = 1.0 if pred == 0 else 0.0
        else:
            recall = tp / gold
        denom = precision + recall
        f1 = 2 * precision * recall / denom if denom > 0 else 0.0
        return cls(precision, recall, f1, tp, pred, gold)


def spans_to_iobes(entities, n: int) -> list[str]:
    """Render non-overlapping spans as IOBES tags over n tokens."""
    tags = ["O"] * n
    occupied = [False] * n
    for span in entities:
        if span.start < 0 or span.end >= n:
            raise ValidationError(f"span [{span.start},{span.end}] outside 0..{n - 1}")
        for i in range(span.start, span.end + 1):
            if occupied[i]:
                raise ValidationError(f"overlapping spans at token {i}")
            occupied[i] = True
        if span.start == span.end:
            tags[span.start] = f"S-{span.label}"
        else:
            tags[span.start] = f"B-{span.label}"
            for i in range(span.start + 1, span.end):
                tags[i] = f"I-{span.label}"
            tags[span.end] = f"E-{span.label}"
    return tags


def _split(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    prefix, _, label = tag.partition("-")
    return prefix, label


def _chunk_ends(prev: str, prev_label, tag: str, label) -> bool:
    if prev in ("E", "S"):
        return True
    if prev in ("B", "I") and tag in ("B", "S", "O"):
        return True
    return prev != "O" and prev_label != label


def _chunk_starts(prev: str, prev_label, tag: str, label) -> bool:
    if tag in ("B", "S"):
        return True
    if prev in ("E", "S", "O") and tag in ("I", "E"):
        return True
    return tag != "O" and prev_label != label


def iobes_to_spans(tags) -> tuple[EntitySpan, ...]:
    """Extract entity spans, repairing malformed sequences."""
    spans: list[EntitySpan] = []
    start: int | None = None
    prev, prev_label = "O", None
    for i, tag in enumerate(tags):
        prefix, label = _split(tag)
        if start is not None and _chunk_ends(prev, prev_label, prefix, label):
            spans.append(EntitySpan(prev_label, start, i - 1))
            start = None
        if start is None and _chunk_starts(prev, prev_label, prefix, label):
            start = i
        prev, prev_label = prefix, label
    if start is not None:
        spans.append(EntitySpan(prev_label, start, len(tags) - 1))
    return tuple(spans)


def entity_prf(pred, gold) -> tuple[PRF, dict[str, PRF]]:
    """Micro-averaged PRF over exact (label, start, end) span matches,
    plus a per-label table. ``pred`` and ``gold`` are aligned lists of
    tag sequences, one per document."""
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted documents vs {len(gold)} gold")
    tp = pred_total = gold_total = 0
    by_label: dict[str, list[int]] = {}
    for doc_idx, (p_tags, g_tags) in enumerate(zip(pred, gold)):
        if len(p_tags) != len(g_tags):
            raise AlignmentError(
                f"document {doc_idx}: {len(p_tags)} predicted tags vs {len(g_tags)} gold"
            )
        p_spans = set(iobes_to_spans(p_tags))
        g_spans = set(iobes_to_spans(g_tags))
        tp += len(p_spans & g_spans)
        pred_total += len(p_spans)
        gold_total += len(g_spans)
        for span in p_spans:
            counts = by_label.setdefault(span.label, [0, 0, 0])
            counts[1] += 1
            if span in g_spans:
                counts[0] += 1
        for span in g_spans:
            by_label.setdefault(span.label, [0, 0, 0])[2] += 1
    overall = PRF.from_counts(tp, pred_total, gold_total)
    table = {label: PRF.from_counts(*c) for label, c in sorted(by_label.items())}
    return overall, table


def macro_prf(table: dict[str, PRF]) -> tuple[float, float, float]:
    """Unweighted label average, emitted for diagnostics only."""
    if not table:
        return 0.0, 0.0, 0.0
    n = len(table)
    return (
        sum(v.precision for v in table.values()) / n,
        sum(v.recall for v in table.values()) / n,
        sum(v.f1 for v in table.values()) / n,
    )


def metrics_csv(overall: PRF, table: dict[str, PRF]) -> str:
    """Per-label rows plus the micro 'overall' row and an unweighted
    'macro' diagnostics row."""
    out = io.StringIO()
    out.write("label,precision,recall,f1,tp,pred,gold\n")
    for label, prf in table.items():
        out.write(
            f"{label},{prf.precision:.6f},{prf.recall:.6f},{prf.f1:.6f},"
            f"{prf.true_positives},{prf.pred_count},{prf.gold_count}\n"
        )
    out.write(
        f"overall,{overall.precision:.6f},{overall.recall:.6f},{overall.f1:.6f},"
        f"{overall.true_positives},{overall.pred_count},{overall.gold_count}\n"
    )
    mp, mr, mf = macro_prf(table)
    out.write(f"macro,{mp:.6f},{mr:.6f},{mf:.6f},,,\n")
    return out.getvalue()
