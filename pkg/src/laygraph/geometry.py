"""Geometric and document primitives shared by every other module.

Coordinates follow the image convention: x grows rightward, y grows
downward. Angles elsewhere in the toolkit are measured counterclockwise
as seen on the rendered page, which in this frame means a ray at angle
``a`` has direction ``(cos a, -sin a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Quad:
    """Four corners in order top-left, top-right, bottom-right, bottom-left.

    The order refers to the box before any rotation and is preserved by
    all transforms, so corner 3 stays "the bottom-left corner" even once
    the box is tilted. Zero-area quads are legal and flagged via
    :meth:`is_degenerate`.
    """

    corners: tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise ValidationError(f"quad needs 4 corners, got {len(self.corners)}")

    @classmethod
    def from_aabb(cls, x0: float, y0: float, x1: float, y1: float) -> Quad:
        return cls((Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)))

    @classmethod
    def from_corner_list(cls, values) -> Quad:
        if len(values) != 8:
            raise ValidationError(f"corner list needs 8 numbers, got {len(values)}")
        pts = tuple(Point(float(values[i]), float(values[i + 1])) for i in range(0, 8, 2))
        return cls(pts)

    def corner_list(self) -> list[float]:
        out: list[float] = []
        for p in self.corners:
            out.extend((p.x, p.y))
        return out

    @property
    def is_degenerate(self) -> bool:
        return self.signed_area == 0.0

    @property
    def signed_area(self) -> float:
        total = 0.0
        for i in range(4):
            p, q = self.corners[i], self.corners[(i + 1) % 4]
            total += p.x * q.y - q.x * p.y
        return 0.5 * total


@dataclass(frozen=True)
class AABB:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValidationError(f"inverted AABB ({self.x0},{self.y0},{self.x1},{self.y1})")

    def contains(self, p: Point) -> bool:
        return self.x0 <= p.x <= self.x1 and self.y0 <= p.y <= self.y1


@dataclass(frozen=True)
class Token:
    index: int
    text: str
    box: Quad


@dataclass(frozen=True)
class EntitySpan:
    label: str
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValidationError(f"span start {self.start} after end {self.end}")


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[Token, ...]
    page_width: float
    page_height: float
    entities: tuple[EntitySpan, ...] = ()

    def __post_init__(self):
        for i, tok in enumerate(self.tokens):
            if tok.index != i:
                raise ValidationError(
                    f"document {self.id!r}: token index {tok.index} at position {i}"
                )
        n = len(self.tokens)
        seen: list[tuple[int, int]] = []
        for span in self.entities:
            if span.start < 0 or span.end >= n:
                raise ValidationError(
                    f"document {self.id!r}: span {span.label} [{span.start},{span.end}] "
                    f"outside token range 0..{n - 1}"
                )
            seen.append((span.start, span.end))
        seen.sort()
        for (s0, e0), (s1, _) in zip(seen, seen[1:]):
            if s1 <= e0:
                raise ValidationError(f"document {self.id!r}: overlapping entity spans")

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


def centroid(box: Quad) -> Point:
    """Arithmetic mean of the four corners."""
    cs = box.corners
    return Point(
        (cs[0].x + cs[1].x + cs[2].x + cs[3].x) / 4.0,
        (cs[0].y + cs[1].y + cs[2].y + cs[3].y) / 4.0,
    )


def aabb(box: Quad) -> AABB:
    """Componentwise min/max envelope of the corners (a lossy view)."""
    xs = [p.x for p in box.corners]
    ys = [p.y for p in box.corners]
    return AABB(min(xs), min(ys), max(xs), max(ys))


def euclidean(p: Point, q: Point) -> float:
    return math.hypot(p.x - q.x, p.y - q.y)
