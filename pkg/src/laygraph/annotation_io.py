"""Parsers for FUNSD- and CORD-style annotation JSON plus the toolkit's
own byte-stable internal record format (schema version 1).

Word order always follows file order: FUNSD blocks then words, CORD
lines then words. Each labelled FUNSD block yields one entity span;
each CORD line yields one span over its words. Internal records store
quads as 8-number corner lists with fixed 6-decimal formatting so that
serialisation is deterministic byte-for-byte.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, ValidationError
from .geometry import Document, EntitySpan, Quad, Token

SCHEMA_VERSION = 1

FUNSD_LABELS = ("header", "question", "answer")

# The 30 entity categories of the receipt corpus.
CORD_LABELS = (
    "menu.nm", "menu.num", "menu.unitprice", "menu.cnt", "menu.discountprice",
    "menu.price", "menu.itemsubtotal", "menu.vatyn", "menu.etc", "menu.sub_nm",
    "menu.sub_unitprice", "menu.sub_cnt", "menu.sub_price", "menu.sub_etc",
    "void_menu.nm", "void_menu.price",
    "sub_total.subtotal_price", "sub_total.discount_price", "sub_total.service_price",
    "sub_total.othersvc_price", "sub_total.tax_price", "sub_total.etc",
    "total.total_price", "total.total_etc", "total.cashprice", "total.changeprice",
    "total.creditcardprice", "total.emoneyprice", "total.menutype_cnt", "total.menuqty_cnt",
)


@dataclass(frozen=True)
class Corpus:
    name: str
    label_set: tuple[str, ...]
    train: tuple[Document, ...]
    test: tuple[Document, ...]

    def __post_init__(self):
        allowed = set(self.label_set)
        for doc in self.train + self.test:
            for span in doc.entities:
                if span.label not in allowed:
                    raise ValidationError(
                        f"document {doc.id!r}: label {span.label!r} not in corpus label set"
                    )
        train_ids = {d.id for d in self.train}
        if any(d.id in train_ids for d in self.test):
            raise ValidationError("train/test share document ids")


def _load_json(raw: str, origin: str) -> dict:
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{origin}: invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc


def _check_box(values, origin: str, word_idx: int) -> list[float]:
    nums = [float(v) for v in values]
    if any(not math.isfinite(v) for v in nums):
        raise ValidationError(f"{origin}: word {word_idx}: non-finite box {values}")
    if len(nums) == 4:
        x0, y0, x1, y1 = nums
        if min(nums) < 0:
            raise ValidationError(f"{origin}: word {word_idx}: negative box {values}")
        if x1 < x0 or y1 < y0:
            raise ValidationError(f"{origin}: word {word_idx}: inverted box {values}")
    return nums


def parse_funsd(raw: str, doc_id: str = "") -> Document:
    """Parse one FUNSD form file. Non-"other" blocks become entity spans
    covering their words; words keep file order. Page size is the tight
    envelope of all boxes (the format carries no page dimensions)."""
    data = _load_json(raw, doc_id or "funsd")
    origin = doc_id or "funsd"
    if "form" not in data:
        raise ParseError(f"{origin}: $.form missing")
    tokens: list[Token] = []
    entities: list[EntitySpan] = []
    for b_idx, block in enumerate(data["form"]):
        label = block.get("label")
        if label not in FUNSD_LABELS and label != "other":
            raise ValidationError(f"{origin}: $.form[{b_idx}]: unknown label {label!r}")
        words = block.get("words", [])
        start = len(tokens)
        for word in words:
            if "box" not in word:
                raise ParseError(f"{origin}: $.form[{b_idx}].words[{len(tokens) - start}]: box missing")
            nums = _check_box(word["box"], origin, len(tokens))
            if len(nums) != 4:
                raise ValidationError(f"{origin}: word {len(tokens)}: FUNSD box needs 4 numbers")
            quad = Quad.from_aabb(*nums)
            tokens.append(Token(len(tokens), str(word.get("text", "")), quad))
        if words and label != "other":
            entities.append(EntitySpan(label, start, len(tokens) - 1))
    width, height = _envelope(tokens)
    return Document(doc_id or "funsd", tuple(tokens), width, height, tuple(entities))


def parse_cord(raw: str, doc_id: str = "") -> Document:
    """Parse one CORD receipt file. Each valid_line's words form one span
    of the line's category; 8-number quads are preserved exactly."""
    data = _load_json(raw, doc_id or "cord")
    origin = doc_id or "cord"
    if "valid_line" not in data:
        raise ParseError(f"{origin}: $.valid_line missing")
    meta = data.get("meta", {})
    size = meta.get("image_size", {})
    tokens: list[Token] = []
    entities: list[EntitySpan] = []
    for l_idx, line in enumerate(data["valid_line"]):
        category = line.get("category")
        if category not in CORD_LABELS:
            raise ValidationError(f"{origin}: $.valid_line[{l_idx}]: unknown category {category!r}")
        words = line.get("words", [])
        start = len(tokens)
        for w_idx, word in enumerate(words):
            quad = word.get("quad")
            if quad is None:
                raise ParseError(f"{origin}: $.valid_line[{l_idx}].words[{w_idx}]: quad missing")
            try:
                corners = [quad[k] for k in ("x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4")]
            except (KeyError, TypeError) as exc:
                raise ParseError(
                    f"{origin}: $.valid_line[{l_idx}].words[{w_idx}]: incomplete quad"
                ) from exc
            nums = _check_box(corners, origin, len(tokens))
            tokens.append(Token(len(tokens), str(word.get("text", "")), Quad.from_corner_list(nums)))
        if words:
            entities.append(EntitySpan(category, start, len(tokens) - 1))
    if "width" in size and "height" in size:
        width, height = float(size["width"]), float(size["height"])
    else:
        width, height = _envelope(tokens)
    return Document(doc_id or "cord", tuple(tokens), width, height, tuple(entities))


def _envelope(tokens) -> tuple[float, float]:
    width = height = 1.0
    for tok in tokens:
        for p in tok.box.corners:
            width = max(width, p.x)
            height = max(height, p.y)
    return width, height


def _fmt(value) -> str:
    if isinstance(value, bool):
        raise ValidationError("booleans not part of the record schema")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(k)}:{_fmt(v)}" for k, v in sorted(value.items()))
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    raise ValidationError(f"unsupported value {value!r}")


def write_internal(doc: Document) -> str:
    """Serialise to the internal record format: sorted keys, floats with
    exactly 6 decimals, one trailing newline."""
    record = {
        "entities": [
            {"end": s.end, "label": s.label, "start": s.start} for s in doc.entities
        ],
        "height": float(doc.page_height),
        "id": doc.id,
        "schema_version": SCHEMA_VERSION,
        "width": float(doc.page_width),
        "words": [
            {"box": [float(v) for v in t.box.corner_list()], "text": t.text}
            for t in doc.tokens
        ],
    }
    return _fmt(record) + "\n"


def read_internal(raw: str) -> Document:
    data = _load_json(raw, "internal")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"internal: schema_version {version!r}, expected {SCHEMA_VERSION}")
    tokens = []
    for w_idx, word in enumerate(data.get("words", [])):
        box = word.get("box")
        if box is None:
            raise ParseError(f"internal: words[{w_idx}]: box missing")
        nums = _check_box(box, data.get("id", "internal"), w_idx)
        if len(nums) == 4:
            quad = Quad.from_aabb(*nums)
        elif len(nums) == 8:
            quad = Quad.from_corner_list(nums)
        else:
            raise ValidationError(f"internal: words[{w_idx}]: box needs 4 or 8 numbers")
        tokens.append(Token(w_idx, str(word.get("text", "")), quad))
    entities = tuple(
        EntitySpan(str(e["label"]), int(e["start"]), int(e["end"]))
        for e in data.get("entities", [])
    )
    return Document(
        str(data.get("id", "")),
        tuple(tokens),
        float(data["width"]),
        float(data["height"]),
        entities,
    )


def detect_format(raw: str) -> str:
    data = _load_json(raw, "autodetect")
    if "form" in data:
        return "funsd"
    if "valid_line" in data:
        return "cord"
    if "schema_version" in data:
        return "internal"
    raise ParseError("autodetect: none of form/valid_line/schema_version present")


_PARSERS = {"funsd": parse_funsd, "cord": parse_cord, "internal": lambda raw, doc_id="": read_internal(raw)}


def _truncate(doc: Document, max_tokens: int) -> Document:
    if doc.n_tokens <= max_tokens:
        return doc
    warnings.warn(f"document {doc.id!r}: truncated {doc.n_tokens} -> {max_tokens} tokens")
    kept = tuple(doc.tokens[:max_tokens])
    spans = tuple(s for s in doc.entities if s.end < max_tokens)
    return Document(doc.id, kept, doc.page_width, doc.page_height, spans)


def _load_dir(path: Path, fmt: str | None, max_tokens: int) -> tuple[list[Document], str | None]:
    docs: list[Document] = []
    files = sorted(p for p in path.iterdir() if p.suffix == ".json")
    for file in files:
        try:
            raw = file.read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read {file}: {exc}") from exc
        file_fmt = fmt or detect_format(raw)
        if fmt is None:
            fmt = file_fmt
        doc = _PARSERS[file_fmt](raw, doc_id=file.stem)
        if not doc.id:
            doc = Document(file.stem, doc.tokens, doc.page_width, doc.page_height, doc.entities)
        docs.append(_truncate(doc, max_tokens))
    return docs, fmt


def load_corpus(
    train_dir,
    test_dir,
    fmt: str | None = None,
    max_tokens: int = 512,
    name: str | None = None,
) -> Corpus:
    """Load a corpus from two directories of .json annotation files.

    Format is auto-detected from the first file unless forced. Document
    order is lexicographic by filename; duplicate ids and an empty test
    set are errors.
    """
    train_path, test_path = Path(train_dir), Path(test_dir)
    for p in (train_path, test_path):
        if not p.is_dir():
            raise ParseError(f"not a directory: {p}")
    train, fmt = _load_dir(train_path, fmt, max_tokens)
    test, fmt = _load_dir(test_path, fmt, max_tokens)
    if not test:
        raise ValidationError(f"test directory {test_path} has no documents; a test set is required")
    if not train:
        raise ValidationError(f"train directory {train_path} has no documents")
    seen: set[str] = set()
    for doc in train + test:
        if doc.id in seen:
            raise ValidationError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
    if fmt == "funsd":
        label_set: tuple[str, ...] = FUNSD_LABELS
    elif fmt == "cord":
        label_set = CORD_LABELS
    else:
        label_set = tuple(sorted({s.label for d in train + test for s in d.entities}))
    return Corpus(name or fmt or "corpus", label_set, tuple(train), tuple(test))
