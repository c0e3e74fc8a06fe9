"""Synthetic form-like corpus generator.

Pages carry key/value field clusters plus distractor words. Key tokens
come from a dedicated vocabulary ("Name:", "Date:", ...) and are
labelled ``question``; the 1-3 value tokens packed immediately to a
key's right are labelled ``answer``. Distractors draw from the same
vocabulary as values, so text alone cannot separate answers from
distractors: only spatial adjacency to a key decides, which is what
makes graph features necessary.

Geometry is engineered so the symmetrised 4-NN graph splits into field
components and distractor components. Fields come in strips of three
key/value rows laid out on one text line (six-plus tokens per strip, so
neighbourhoods vary with position instead of collapsing into a complete
clique) and distractors in compact groups of at least five; both unit
kinds sit on a coarse jittered grid, far from each other, so every
token's four nearest neighbours stay inside its own unit. The row gap
within a strip keeps each answer token's own key among its spatial
4-NN, and no distractor ever has a key in its neighbourhood.

Field strips favour the upper-left region of the page and distractor
groups the rest, with a deliberate crossover tail on both sides.
Absolute position is therefore a usable but imperfect and redundant
signal. Under shifting, field content drifts out of the learned region;
under down-scaling, distractor content compresses into it. Models that
lean on coordinates fit the training pages a little better and lose
accuracy under both manipulations, which is exactly what the
robustness experiments measure.
"""

from __future__ import annotations

import math

import numpy as np

from .annotation_io import Corpus
from .errors import ParameterError
from .geometry import Document, EntitySpan, Quad, Token

KEY_VOCAB = ("Name:", "Date:", "Total:", "Ref:", "Item:", "Code:")
WORD_VOCAB = (
    "alpha", "bravo", "cedar", "delta", "ember", "frost", "gamma", "haven",
    "iris", "jade", "karma", "lumen", "maple", "onyx", "plume", "quill",
)
# Kept to 4-6 characters so box widths stay small relative to the grid.

CELL_W = 760.0
CELL_H = 300.0
JITTER = 25.0
BAND_TAIL = 0.15  # placement weight outside a site kind's preferred band
BOX_HEIGHT = 16.0
WORD_GAP = 5.0
ROW_GAP = 55.0  # gap between the key/value rows of one field strip
BLOB_DY = 24.0  # vertical gap between distractor rows
ROWS_PER_STRIP = 3
VALUE_COUNT_P = (0.92, 0.05, 0.03)  # 1, 2, 3 values per key
LABELS = ("question", "answer")


def _box_width(text: str) -> float:
    return 4.0 * len(text) + 4.0


def _plan_fields(rng, tokens_per_doc: int) -> tuple[list[int], int]:
    """Choose per-row value counts (whole strips of 3 rows) and the
    distractor budget (at least 5 so distractor groups self-saturate)."""
    max_strips = max(1, (tokens_per_doc - 5 - 2 * ROWS_PER_STRIP) // (2 * ROWS_PER_STRIP) + 1)
    n_strips = min(2, max_strips)
    n_fields = ROWS_PER_STRIP * n_strips
    if tokens_per_doc < 2 * ROWS_PER_STRIP + 5:
        raise ParameterError(
            f"tokens_per_doc={tokens_per_doc} too small; need >= {2 * ROWS_PER_STRIP + 5}"
        )
    values = [1 + int(rng.choice(3, p=VALUE_COUNT_P)) for _ in range(n_fields)]
    while n_fields + sum(values) + 5 > tokens_per_doc:
        big = max(range(n_fields), key=lambda i: values[i])
        if values[big] == 1:
            raise ParameterError(f"tokens_per_doc={tokens_per_doc} cannot fit {n_strips} strips")
        values[big] -= 1
    return values, tokens_per_doc - n_fields - sum(values)


def _row_boxes(words, x: float, cy: float):
    """One left-to-right text row starting at x; returns (text, Quad, x_end)."""
    out = []
    for word in words:
        width = _box_width(word)
        out.append((word, Quad.from_aabb(x, cy - BOX_HEIGHT / 2, x + width, cy + BOX_HEIGHT / 2)))
        x += width + WORD_GAP
    return out, x - WORD_GAP


def _make_document(rng: np.random.Generator, doc_id: str, tokens_per_doc: int) -> Document:
    values, n_distractors = _plan_fields(rng, tokens_per_doc)
    n_strips = len(values) // ROWS_PER_STRIP
    group_sizes: list[int] = []
    remaining = n_distractors
    while remaining > 0:
        size = remaining if remaining < 10 else 5
        if remaining - size in (1, 2, 3, 4):
            size = remaining  # avoid leaving a group under 5
        if size > 9:
            size = 5
        group_sizes.append(size)
        remaining -= size

    sites = n_strips + len(group_sizes)
    rows = max(5, math.ceil(sites / 2) + 1)
    cols = 2
    page_w, page_h = cols * CELL_W, rows * CELL_H
    cells = [(r, c) for r in range(rows) for c in range(cols)]

    def band_weight(cell, field):
        r, c = cell
        in_band = c == 0 and r / (rows - 1) <= 0.6
        return 1.0 if in_band == field else BAND_TAIL

    def pick(count, field, pool):
        weights = np.array([band_weight(cell, field) for cell in pool])
        probs = weights / weights.sum()
        idx = rng.choice(len(pool), size=count, replace=False, p=probs)
        chosen = [pool[i] for i in idx]
        for cell in chosen:
            pool.remove(cell)
        return chosen

    pool = list(cells)
    strip_cells = pick(n_strips, True, pool)
    group_cells = pick(len(group_sizes), False, pool)

    def anchor(cell):
        r, c = cell
        return (
            (c + 0.5) * CELL_W + rng.uniform(-JITTER, JITTER),
            (r + 0.5) * CELL_H + rng.uniform(-JITTER, JITTER),
        )

    # (text, box, cluster_id, role); cluster_id -1 marks distractors.
    raw: list[tuple[str, Quad, int, str]] = []
    for s_idx, cell in enumerate(strip_cells):
        ax, ay = anchor(cell)
        row_words = []
        for half in range(ROWS_PER_STRIP):
            c_idx = ROWS_PER_STRIP * s_idx + half
            words = [str(rng.choice(KEY_VOCAB))]
            words += [str(rng.choice(WORD_VOCAB)) for _ in range(values[c_idx])]
            row_words.append(words)
        widths = [
            sum(_box_width(w) for w in words) + WORD_GAP * (len(words) - 1)
            for words in row_words
        ]
        strip_w = sum(widths) + ROW_GAP * (ROWS_PER_STRIP - 1)
        x = ax - strip_w / 2.0
        for half, words in enumerate(row_words):
            c_idx = ROWS_PER_STRIP * s_idx + half
            placed, x_end = _row_boxes(words, x, ay)
            for w_idx, (word, box) in enumerate(placed):
                raw.append((word, box, c_idx, "key" if w_idx == 0 else "value"))
            x = x_end + ROW_GAP
    for g_idx, cell in enumerate(group_cells):
        ax, ay = anchor(cell)
        size = group_sizes[g_idx]
        words = [str(rng.choice(WORD_VOCAB)) for _ in range(size)]
        n_rows = 2 if size <= 6 else 3
        per_row = math.ceil(size / n_rows)
        placed_count = 0
        for row in range(n_rows):
            count = min(per_row, size - placed_count)
            if count <= 0:
                break
            row_words = words[placed_count : placed_count + count]
            width = sum(_box_width(w) for w in row_words) + WORD_GAP * (count - 1)
            cy = ay + (row - (n_rows - 1) / 2.0) * (BOX_HEIGHT + BLOB_DY / 2)
            placed, _ = _row_boxes(row_words, ax - width / 2.0, cy)
            for word, box in placed:
                raw.append((word, box, -1, "distractor"))
            placed_count += count

    # Reading order: top-to-bottom then left-to-right by centroid.
    def sort_key(item):
        box = item[1]
        xs = [p.x for p in box.corners]
        ys = [p.y for p in box.corners]
        return (sum(ys) / 4.0, sum(xs) / 4.0)

    raw.sort(key=sort_key)
    tokens = tuple(Token(i, item[0], item[1]) for i, item in enumerate(raw))

    entities: list[EntitySpan] = []
    for c_idx in range(len(values)):
        members = [i for i, item in enumerate(raw) if item[2] == c_idx]
        if members != list(range(members[0], members[0] + len(members))):
            raise ParameterError(f"{doc_id}: field tokens not contiguous after ordering")
        key_idx = members[0]
        assert raw[key_idx][3] == "key"
        entities.append(EntitySpan("question", key_idx, key_idx))
        entities.append(EntitySpan("answer", members[1], members[-1]))
    entities.sort(key=lambda s: s.start)
    return Document(doc_id, tokens, page_w, page_h, tuple(entities))


def make_synthetic_corpus(
    seed: int, n_docs: int, tokens_per_doc: int, n_train: int | None = None
) -> Corpus:
    """Deterministic corpus of ``n_docs`` pages with exactly
    ``tokens_per_doc`` tokens each (minimum 11: one three-row field
    strip plus five distractors); the first ``n_train`` documents
    (default: 10%) form the training pool."""
    if n_docs < 1:
        raise ParameterError(f"n_docs must be >= 1, got {n_docs}")
    if n_train is None:
        n_train = max(1, n_docs // 10)
    if not 1 <= n_train < n_docs:
        raise ParameterError(f"n_train={n_train} must be in [1, {n_docs - 1}]")
    docs = []
    for idx in range(n_docs):
        rng = np.random.default_rng([seed, idx])
        docs.append(_make_document(rng, f"synth-{seed}-{idx:04d}", tokens_per_doc))
    return Corpus("synthetic", LABELS, tuple(docs[:n_train]), tuple(docs[n_train:]))
