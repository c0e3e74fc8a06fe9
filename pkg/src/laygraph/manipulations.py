"""Affine manipulations of document annotation geometry.

All operations return new documents; token text, order and entity spans
are untouched. Coordinates are allowed to leave the page or go negative:
clamping would destroy the invariance properties these manipulations are
used to probe. Page dimensions are likewise left untouched so that
page-relative coordinate features actually feel the manipulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError, ValidationError
from .geometry import Document, Point, Quad, Token


@dataclass(frozen=True)
class ManipSpec:
    """One parsed manipulation, e.g. from the CLI grammar ``shift:a=20``."""

    kind: str  # shift | scale | rotate_per_box | rotate_document
    a: float = 0.0
    s_w: float = 1.0
    s_h: float = 1.0
    delta: float = 0.0
    # rotate_document center; None defaults to the page bottom-left (0, H),
    # and the literals "W"/"H" resolve to page width/height per document.
    cx: float | str | None = None
    cy: float | str | None = None

    def __post_init__(self):
        if self.kind not in ("shift", "scale", "rotate_per_box", "rotate_document"):
            raise ParameterError(f"unknown manipulation kind {self.kind!r}")
        if self.kind == "scale" and (self.s_w <= 0 or self.s_h <= 0):
            raise ParameterError(f"scale factors must be positive, got ({self.s_w},{self.s_h})")


def _map_tokens(doc: Document, fn) -> Document:
    tokens = tuple(
        Token(t.index, t.text, Quad(tuple(fn(p, t.box) for p in t.box.corners)))
        for t in doc.tokens
    )
    return Document(doc.id, tokens, doc.page_width, doc.page_height, doc.entities)


def shift(doc: Document, a: float) -> Document:
    """Translate every box corner by the vector (a, a)."""
    return _map_tokens(doc, lambda p, _box: Point(p.x + a, p.y + a))


def scale(doc: Document, s_w: float, s_h: float) -> Document:
    """Divide every corner by (s_w, s_h); factors above 1 shrink the content."""
    if s_w <= 0 or s_h <= 0:
        raise ParameterError(f"scale factors must be positive, got ({s_w},{s_h})")
    return _map_tokens(doc, lambda p, _box: Point(p.x / s_w, p.y / s_h))


def _rotate_about(p: Point, cx: float, cy: float, cos_d: float, sin_d: float) -> Point:
    dx, dy = p.x - cx, p.y - cy
    return Point(dx * cos_d - dy * sin_d + cx, dx * sin_d + dy * cos_d + cy)


def rotate_per_box(doc: Document, delta: float) -> Document:
    """Rotate each box by delta degrees about its own bottom-left corner.

    The pivot is corner 3 of the quad, i.e. (x0, y1) for an axis-aligned
    box. Each box pivots independently, so this is not an isometry of the
    document as a whole.
    """
    rad = math.radians(delta)
    cos_d, sin_d = math.cos(rad), math.sin(rad)

    def fn(p: Point, box: Quad) -> Point:
        pivot = box.corners[3]
        return _rotate_about(p, pivot.x, pivot.y, cos_d, sin_d)

    return _map_tokens(doc, fn)


def rotate_document(doc: Document, delta: float, center: Point) -> Document:
    """Rotate every corner of every box by delta degrees about one shared center."""
    rad = math.radians(delta)
    cos_d, sin_d = math.cos(rad), math.sin(rad)
    return _map_tokens(doc, lambda p, _box: _rotate_about(p, center.x, center.y, cos_d, sin_d))


def _resolve_coord(value: float | str | None, doc: Document, default: float) -> float:
    if value is None:
        return default
    if value == "W":
        return doc.page_width
    if value == "H":
        return doc.page_height
    return float(value)


def apply_manipulation(doc: Document, spec: ManipSpec) -> Document:
    if spec.kind == "shift":
        return shift(doc, spec.a)
    if spec.kind == "scale":
        return scale(doc, spec.s_w, spec.s_h)
    if spec.kind == "rotate_per_box":
        return rotate_per_box(doc, spec.delta)
    cx = _resolve_coord(spec.cx, doc, 0.0)
    cy = _resolve_coord(spec.cy, doc, doc.page_height)
    return rotate_document(doc, spec.delta, Point(cx, cy))


_KIND_ALIASES = {
    "shift": "shift",
    "scale": "scale",
    "rotate": "rotate_per_box",
    "rotate-doc": "rotate_document",
}

_ALLOWED_KEYS = {
    "shift": {"a"},
    "scale": {"sw", "sh"},
    "rotate_per_box": {"delta"},
    "rotate_document": {"delta", "cx", "cy"},
}


def parse_manip(text: str) -> ManipSpec:
    """Parse the CLI grammar: shift:a=20 | scale:sw=2,sh=2 | rotate:delta=8 |
    rotate-doc:delta=8,cx=0,cy=H. ``cy=H``/``cx=W`` stand for the page
    height/width of whichever document the manipulation is applied to.
    """
    head, sep, rest = text.partition(":")
    kind = _KIND_ALIASES.get(head.strip())
    if kind is None:
        raise ParameterError(f"unknown manipulation {head!r}")
    kv: dict[str, str] = {}
    if sep:
        for item in rest.split(","):
            if not item:
                continue
            key, eq, value = item.partition("=")
            if not eq:
                raise ParameterError(f"bad manipulation argument {item!r}")
            kv[key.strip()] = value.strip()
    allowed = _ALLOWED_KEYS[kind]
    unknown = set(kv) - allowed
    if unknown:
        raise ParameterError(f"{head}: unknown keys {sorted(unknown)}, allowed {sorted(allowed)}")

    def num(key: str, default: float) -> float:
        if key not in kv:
            return default
        try:
            return float(kv[key])
        except ValueError as exc:
            raise ParameterError(f"{head}: {key}={kv[key]!r} is not a number") from exc

    def center(key: str) -> float | str | None:
        if key not in kv:
            return None
        raw = kv[key]
        if raw in ("W", "H"):
            return raw
        try:
            return float(raw)
        except ValueError as exc:
            raise ParameterError(f"{head}: {key}={raw!r} is not a number or W/H") from exc

    if kind == "shift":
        return ManipSpec("shift", a=num("a", 0.0))
    if kind == "scale":
        return ManipSpec("scale", s_w=num("sw", 1.0), s_h=num("sh", 1.0))
    if kind == "rotate_per_box":
        return ManipSpec("rotate_per_box", delta=num("delta", 0.0))
    return ManipSpec("rotate_document", delta=num("delta", 0.0), cx=center("cx"), cy=center("cy"))


def format_manip(spec: ManipSpec) -> str:
    """Inverse of :func:`parse_manip`, used for config echo in reports."""
    if spec.kind == "shift":
        return f"shift:a={spec.a:g}"
    if spec.kind == "scale":
        return f"scale:sw={spec.s_w:g},sh={spec.s_h:g}"
    if spec.kind == "rotate_per_box":
        return f"rotate:delta={spec.delta:g}"

    def fmt(value: float | str | None, default: str) -> str:
        if value is None:
            return default
        if isinstance(value, str):
            return value
        return f"{value:g}"

    return f"rotate-doc:delta={spec.delta:g},cx={fmt(spec.cx, '0')},cy={fmt(spec.cy, 'H')}"
