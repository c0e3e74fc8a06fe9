"""Token adjacency graphs built from layout heuristics.

Two families are provided: an undirected k-nearest-neighbour graph over
token centroids, and per-angle graphs joining each token to the k nearest
boxes hit by a ray cast from its centroid. Both families depend only on
relative geometry, which is what makes them stable under shifting,
uniform scaling and rotation of the page.

Distances are centroid-to-centroid. Selection ties are broken by
ascending token index so results are reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .geometry import Document, Point, Quad, aabb, centroid


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    n: int
    edges: np.ndarray  # bool (n, n), read-only
    symmetric: bool

    def __post_init__(self):
        self.edges.flags.writeable = False

    @property
    def has_self_loops(self) -> bool:
        return self.n > 0 and bool(self.edges.diagonal().all())

    def edge_set(self) -> set[tuple[int, int]]:
        """Undirected edge list as (i, j) with i < j, ignoring the diagonal."""
        ii, jj = np.nonzero(np.triu(self.edges | self.edges.T, k=1))
        return set(zip(ii.tolist(), jj.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AdjacencyMatrix):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.edges, other.edges))


@dataclass(frozen=True)
class GraphBundle:
    mode: str  # nearest | angles
    k: int
    theta: float | None  # angles mode only
    matrices: tuple[AdjacencyMatrix, ...]
    angles: tuple[float, ...]  # empty for nearest mode

    @property
    def m(self) -> int:
        return len(self.matrices)


def _centroids(doc: Document) -> np.ndarray:
    out = np.empty((doc.n_tokens, 2), dtype=np.float64)
    for i, tok in enumerate(doc.tokens):
        c = centroid(tok.box)
        out[i, 0] = c.x
        out[i, 1] = c.y
    return out


def knn_space_graph(doc: Document, k: int) -> AdjacencyMatrix:
    """Undirected union-symmetrised k-NN graph over token centroids.

    An edge (i, j) exists iff j is among i's k nearest tokens or i is
    among j's; with fewer than k other tokens every pair is joined. No
    self-edges are added here.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    n = doc.n_tokens
    edges = np.zeros((n, n), dtype=bool)
    if n > 1:
        pts = _centroids(doc)
        diff = pts[:, None, :] - pts[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx = np.arange(n)
        kk = min(k, n - 1)
        for i in range(n):
            row = d2[i].copy()
            row[i] = np.inf  # exclude self
            order = np.lexsort((idx, row))
            edges[i, order[:kk]] = True
        edges |= edges.T
    return AdjacencyMatrix(n, edges, symmetric=True)


def _quad_array(box: Quad) -> np.ndarray:
    return np.array([[p.x, p.y] for p in box.corners], dtype=np.float64)


def _ray_direction(alpha: float) -> tuple[float, float]:
    rad = math.radians(alpha)
    # y grows downward, alpha is counterclockwise as rendered.
    return math.cos(rad), -math.sin(rad)


def _ray_segment(ox, oy, dx, dy, px, py, qx, qy) -> float | None:
    """Smallest t >= 0 with origin + t*dir on segment pq, or None."""
    ex, ey = qx - px, qy - py
    wx, wy = px - ox, py - oy
    det = dx * ey - dy * ex
    if det != 0.0:
        t = (wx * ey - wy * ex) / det
        u = (dx * wy - dy * wx) / -det
        if t >= 0.0 and 0.0 <= u <= 1.0:
            return t
        return None
    # Parallel: a hit requires the segment to lie on the ray's line, in
    # which case the overlap of [min t, max t] with [0, inf) decides.
    if dx * wy - dy * wx != 0.0:
        return None
    t_p = (px - ox) * dx + (py - oy) * dy  # dir is unit length
    t_q = (qx - ox) * dx + (qy - oy) * dy
    if max(t_p, t_q) < 0.0:
        return None
    return max(0.0, min(t_p, t_q))


def _quad_contains(box: Quad, p: Point) -> bool:
    """Point-in-convex-quad test, boundary inclusive; exact for degenerates."""
    if not aabb(box).contains(p):
        return False
    pos = neg = False
    for i in range(4):
        a, b = box.corners[i], box.corners[(i + 1) % 4]
        cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
        pos |= cross > 0
        neg |= cross < 0
    if pos and neg:
        return False
    if pos or neg:
        return True
    # All cross products zero: the quad is degenerate, so membership
    # reduces to lying on one of its (possibly zero-length) edges.
    for i in range(4):
        a, b = box.corners[i], box.corners[(i + 1) % 4]
        lo_x, hi_x = min(a.x, b.x), max(a.x, b.x)
        lo_y, hi_y = min(a.y, b.y), max(a.y, b.y)
        colinear = (b.x - a.x) * (p.y - a.y) == (b.y - a.y) * (p.x - a.x)
        if colinear and lo_x <= p.x <= hi_x and lo_y <= p.y <= hi_y:
            return True
    return False


def ray_hit(origin: Point, alpha: float, box: Quad) -> float | None:
    """Distance along the ray from origin at angle alpha to the box, or None.

    The ray direction is (cos alpha, -sin alpha); the returned parameter is
    in page units because the direction is unit length. An origin inside
    (or on the boundary of) the box hits at distance 0. The test checks
    each of the four edges plus interior containment.
    """
    if _quad_contains(box, origin):
        return 0.0
    dx, dy = _ray_direction(alpha)
    best: float | None = None
    cs = box.corners
    for i in range(4):
        a, b = cs[i], cs[(i + 1) % 4]
        t = _ray_segment(origin.x, origin.y, dx, dy, a.x, a.y, b.x, b.y)
        if t is not None and (best is None or t < best):
            best = t
    return best


def _ray_hits_batch(origin: np.ndarray, alpha: float, quads: np.ndarray) -> np.ndarray:
    """Vectorised ray-vs-convex-quad clipping for (m, 4, 2) corner arrays.

    Returns hit distances with NaN for misses. Uses parametric half-plane
    clipping, which requires non-degenerate quads; callers route
    zero-area quads through :func:`ray_hit`.
    """
    dx, dy = _ray_direction(alpha)
    edge = np.roll(quads, -1, axis=1) - quads  # (m, 4, 2)
    normal = np.stack([edge[..., 1], -edge[..., 0]], axis=-1)
    # Orient normals outward regardless of corner winding.
    area2 = np.einsum("me,me->m", quads[..., 0], np.roll(quads[..., 1], -1, axis=1)) - np.einsum(
        "me,me->m", np.roll(quads[..., 0], -1, axis=1), quads[..., 1]
    )
    normal = normal * np.where(area2 < 0, -1.0, 1.0)[:, None, None]
    w = np.einsum("mek,mek->me", normal, origin[None, None, :] - quads)
    nu = normal[..., 0] * dx + normal[..., 1] * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = -w / nu
    entering = nu < 0
    leaving = nu > 0
    parallel_out = (nu == 0) & (w > 0)

    t_lo = np.where(entering, t_star, -np.inf).max(axis=1)
    t_lo = np.maximum(t_lo, 0.0)
    t_hi = np.where(leaving, t_star, np.inf).min(axis=1)
    hit = (t_lo <= t_hi) & ~parallel_out.any(axis=1)
    return np.where(hit, t_lo, np.nan)


def knn_angle_graph(
    doc: Document, k: int, alpha: float, use_aabb: bool = False
) -> AdjacencyMatrix:
    """Undirected graph joining each token to the k nearest ray-hit boxes.

    A ray is cast from each token's centroid at angle alpha; every other
    token whose box the ray intersects is a candidate, the k nearest by
    hit distance are kept (ties by ascending index), and the resulting
    directed edges are symmetrised. A token's own box is never a
    candidate. With ``use_aabb`` the ray is tested against axis-aligned
    envelopes instead of the exact quadrilaterals.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    n = doc.n_tokens
    edges = np.zeros((n, n), dtype=bool)
    if n > 1:
        boxes = [tok.box for tok in doc.tokens]
        if use_aabb:
            boxes = [
                Quad.from_aabb(bb.x0, bb.y0, bb.x1, bb.y1) for bb in (aabb(b) for b in boxes)
            ]
        quads = np.stack([_quad_array(b) for b in boxes])
        degenerate = [b.is_degenerate for b in boxes]
        any_degenerate = any(degenerate)
        pts = _centroids(doc)
        idx = np.arange(n)
        for i in range(n):
            t = _ray_hits_batch(pts[i], alpha, quads)
            if any_degenerate:
                origin = Point(pts[i, 0], pts[i, 1])
                for j, is_deg in enumerate(degenerate):
                    if is_deg:
                        hit = ray_hit(origin, alpha, boxes[j])
                        t[j] = np.nan if hit is None else hit
            t[i] = np.nan
            candidates = idx[~np.isnan(t)]
            if candidates.size:
                order = np.lexsort((candidates, t[candidates]))
                edges[i, candidates[order[:k]]] = True
        edges |= edges.T
    return AdjacencyMatrix(n, edges, symmetric=True)


def bundle_angles(theta: float, start_at_zero: bool = True) -> list[float]:
    """The angle sweep for a given step: M = floor(360/theta) angles.

    ``start_at_zero`` selects {0, theta, ..., (M-1) theta}; the alternative
    reading {theta, ..., M theta} is kept behind this switch.
    """
    if theta <= 0 or theta > 360:
        raise ParameterError(f"theta must be in (0, 360], got {theta}")
    m = int(math.floor(360.0 / theta + 1e-9))
    base = 0.0 if start_at_zero else theta
    return [base + i * theta for i in range(m)]


def angle_bundle(
    doc: Document,
    k: int,
    theta: float,
    start_at_zero: bool = True,
    use_aabb: bool = False,
) -> GraphBundle:
    """One angular k-NN graph per sweep angle."""
    angles = bundle_angles(theta, start_at_zero)
    matrices = tuple(knn_angle_graph(doc, k, a, use_aabb=use_aabb) for a in angles)
    return GraphBundle("angles", k, theta, matrices, tuple(angles))


def nearest_bundle(doc: Document, k: int) -> GraphBundle:
    return GraphBundle("nearest", k, None, (knn_space_graph(doc, k),), ())


def add_self_loops(a: AdjacencyMatrix) -> AdjacencyMatrix:
    """Set the diagonal; idempotent. Kept out of the stored heuristics so
    invariance checks compare pure topology."""
    edges = a.edges.copy()
    np.fill_diagonal(edges, True)
    return AdjacencyMatrix(a.n, edges, symmetric=a.symmetric)


def adjacency_to_dot(a: AdjacencyMatrix, name: str = "G") -> str:
    lines = [f"graph {name} {{"]
    for i in range(a.n):
        lines.append(f"  {i};")
    for i, j in sorted(a.edge_set()):
        lines.append(f"  {i} -- {j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def adjacency_to_json(
    a: AdjacencyMatrix, mode: str, k: int, alpha: float | None = None
) -> str:
    import json

    payload: dict = {"n": a.n, "mode": mode, "k": k}
    if alpha is not None:
        payload["alpha"] = alpha
    payload["edges"] = [list(e) for e in sorted(a.edge_set())]
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
