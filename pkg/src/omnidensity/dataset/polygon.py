"""Planar polygon primitives: orientation, convex hull, point-in-polygon.

Orientation is evaluated in floating point with a static error filter and
re-evaluated exactly with :class:`fractions.Fraction` when the float result
is too close to zero to trust.  Hull and containment decisions are therefore
exact for the float inputs given.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..errors import DegenerateHull

_EPS = np.finfo(np.float64).eps


def orient(a, b, c) -> int:
    """Sign of the cross product ``(b - a) x (c - a)``: +1 left turn (counter-
    clockwise in a y-up frame), -1 right turn, 0 collinear."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    cx, cy = float(c[0]), float(c[1])
    l = (bx - ax) * (cy - ay)
    r = (by - ay) * (cx - ax)
    det = l - r
    bound = 4.0 * _EPS * (abs(l) + abs(r))
    if det > bound:
        return 1
    if det < -bound:
        return -1
    fa = (Fraction(ax), Fraction(ay))
    exact = ((Fraction(bx) - fa[0]) * (Fraction(cy) - fa[1])
             - (Fraction(by) - fa[1]) * (Fraction(cx) - fa[0]))
    return (exact > 0) - (exact < 0)


def convex_hull(points) -> list[tuple[float, float]]:
    """Monotone-chain hull; vertices counter-clockwise (in a y-up frame),
    starting from the lexicographically smallest point, collinear points
    dropped."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        raise DegenerateHull(f"need at least 3 distinct points, got {len(pts)}")

    def chain(seq):
        out: list = []
        for p in seq:
            while len(out) >= 2 and orient(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHull("all points are collinear")
    return hull


def _on_segment(p, a, b) -> bool:
    if orient(a, b, p) != 0:
        return False
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def point_in_polygon(p, polygon) -> bool:
    """Closed-polygon test: points on an edge or vertex count as inside."""
    poly = [(float(q[0]), float(q[1])) for q in polygon]
    x, y = float(p[0]), float(p[1])
    n = len(poly)
    inside = False
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if _on_segment((x, y), a, b):
            return True
        if (a[1] > y) != (b[1] > y):
            # edge straddles the horizontal ray; side of the crossing by orientation
            s = orient(a, b, (x, y))
            if (s > 0) == (b[1] > a[1]):
                inside = not inside
    return inside


def polygon_mask(polygon, shape, tol: float = 1e-9) -> np.ndarray:
    """Boolean raster mask of pixel centres inside the closed polygon.

    Vectorised float version of :func:`point_in_polygon`; points within
    ``tol`` of an edge count as inside.
    """
    h, w = shape
    poly = np.asarray(polygon, dtype=np.float64)
    vv, uu = np.mgrid[0:h, 0:w]
    return points_in_polygon(np.stack([uu.ravel(), vv.ravel()], axis=1), poly, tol).reshape(h, w)


def points_in_polygon(points, polygon, tol: float = 1e-9) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    edge = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        length2 = ex * ex + ey * ey
        t = np.clip(((x - ax) * ex + (y - ay) * ey) / length2, 0.0, 1.0) if length2 > 0 else 0.0
        dx = x - (ax + t * ex)
        dy = y - (ay + t * ey)
        edge |= dx * dx + dy * dy <= tol * tol
        straddle = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = ax + (y - ay) * ex / ey
        inside ^= straddle & (x < xcross)
    return inside | edge


def is_simple(polygon) -> bool:
    """True when no two non-adjacent edges intersect."""
    poly = [(float(q[0]), float(q[1])) for q in polygon]
    n = len(poly)
    if n < 3 or len(set(poly)) != n:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and _on_segment(p1, q1, q2)) or (d2 == 0 and _on_segment(p2, q1, q2))
            or (d3 == 0 and _on_segment(q1, p1, p2)) or (d4 == 0 and _on_segment(q2, p1, p2)))


def polygon_area(polygon) -> float:
    """Signed shoelace area (positive for counter-clockwise in a y-up frame)."""
    p = np.asarray(polygon, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
