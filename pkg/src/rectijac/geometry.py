"""Exact integer primitives for rectilinear polygons on the pixel grid.

A pixel is the half-open unit cell ``[x, x+1) x [y, y+1)`` named by its
lower-left corner; membership is decided at the cell center, so a horizontal
ray at half-integer height never touches a vertex or runs along an edge.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

COORD_MIN = -(2**31)
COORD_MAX = 2**31 - 1

# Polygons with more edges than this skip the O(E^2) simplicity check.
SIMPLICITY_CHECK_MAX_EDGES = 512


class PolygonError(ValueError):
    """Base class for polygon validation failures."""


class NotRectilinear(PolygonError):
    pass


class Degenerate(PolygonError):
    pass


class SelfIntersecting(PolygonError):
    pass


class OutOfRange(PolygonError):
    pass


@dataclass(frozen=True)
class GridPoint:
    x: int
    y: int


@dataclass(frozen=True)
class Mbr:
    """Half-open pixel rectangle ``[xlo, xhi) x [ylo, yhi)``."""

    xlo: int
    ylo: int
    xhi: int
    yhi: int

    @property
    def width(self) -> int:
        return self.xhi - self.xlo

    @property
    def height(self) -> int:
        return self.yhi - self.ylo

    @property
    def size(self) -> int:
        return max(self.width, 0) * max(self.height, 0)

    @property
    def is_empty(self) -> bool:
        return self.xlo >= self.xhi or self.ylo >= self.yhi

    def intersects(self, other: Mbr) -> bool:
        # Shared edges do not count: no pixel is common to both.
        return (
            self.xlo < other.xhi
            and other.xlo < self.xhi
            and self.ylo < other.yhi
            and other.ylo < self.yhi
        )

    def intersection(self, other: Mbr) -> Mbr:
        return Mbr(
            max(self.xlo, other.xlo),
            max(self.ylo, other.ylo),
            min(self.xhi, other.xhi),
            min(self.yhi, other.yhi),
        )

    def union(self, other: Mbr) -> Mbr:
        return Mbr(
            min(self.xlo, other.xlo),
            min(self.ylo, other.ylo),
            max(self.xhi, other.xhi),
            max(self.yhi, other.yhi),
        )

    def contains(self, other: Mbr) -> bool:
        return (
            self.xlo <= other.xlo
            and self.ylo <= other.ylo
            and other.xhi <= self.xhi
            and other.yhi <= self.yhi
        )

    def translate(self, dx: int, dy: int) -> Mbr:
        return Mbr(self.xlo + dx, self.ylo + dy, self.xhi + dx, self.yhi + dy)

    def pixels(self) -> Iterable[GridPoint]:
        for y in range(self.ylo, self.yhi):
            for x in range(self.xlo, self.xhi):
                yield GridPoint(x, y)


@dataclass(frozen=True)
class RectilinearPolygon:
    """Simple rectilinear ring in canonical form.

    Instances are normally built by :func:`validate_polygon`, which drops
    redundant vertices and orients the ring counter-clockwise.  The ring is
    implicitly closed; the first vertex is not repeated.
    """

    id: int
    vertices: tuple[tuple[int, int], ...]
    mbr: Mbr
    area: int

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, ...]:
        """Vertical and horizontal edges as ``(vx, vylo, vyhi, hy, hxlo, hxhi)``.

        Every vertex is an endpoint of exactly one vertical edge, so the
        vertical arrays also enumerate all vertices.
        """
        vx, vylo, vyhi, hy, hxlo, hxhi = [], [], [], [], [], []
        m = len(self.vertices)
        for i in range(m):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % m]
            if x1 == x2:
                vx.append(x1)
                vylo.append(min(y1, y2))
                vyhi.append(max(y1, y2))
            else:
                hy.append(y1)
                hxlo.append(min(x1, x2))
                hxhi.append(max(x1, x2))
        return tuple(
            np.asarray(a, dtype=np.int64) for a in (vx, vylo, vyhi, hy, hxlo, hxhi)
        )

    def translate(self, dx: int, dy: int) -> RectilinearPolygon:
        return RectilinearPolygon(
            self.id,
            tuple((x + dx, y + dy) for x, y in self.vertices),
            self.mbr.translate(dx, dy),
            self.area,
        )

    def scale(self, factor: int) -> RectilinearPolygon:
        return RectilinearPolygon(
            self.id,
            tuple((x * factor, y * factor) for x, y in self.vertices),
            Mbr(*(c * factor for c in (self.mbr.xlo, self.mbr.ylo, self.mbr.xhi, self.mbr.yhi))),
            self.area * factor * factor,
        )

    def with_id(self, new_id: int) -> RectilinearPolygon:
        return RectilinearPolygon(new_id, self.vertices, self.mbr, self.area)


def signed_area2(vertices: Sequence[tuple[int, int]]) -> int:
    """Twice the shoelace signed area (positive for counter-clockwise rings)."""
    total = 0
    m = len(vertices)
    for i in range(m):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % m]
        total += x1 * y2 - x2 * y1
    return total


def polygon_area(p: RectilinearPolygon) -> int:
    """Number of pixel cells enclosed by ``p`` (exact shoelace)."""
    a2 = abs(signed_area2(p.vertices))
    # Rectilinear integer rings always have an even doubled area.
    assert a2 % 2 == 0
    return a2 // 2


def pixel_in_polygon(px: GridPoint, p: RectilinearPolygon) -> bool:
    """Ray-cast test of the center of pixel ``px`` against ``p``."""
    vx, vylo, vyhi = p.edge_arrays[:3]
    crossings = np.count_nonzero((vx > px.x) & (vylo <= px.y) & (px.y < vyhi))
    return bool(crossings & 1)


def compute_mbr(vertices: Sequence[tuple[int, int]]) -> Mbr:
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    return Mbr(min(xs), min(ys), max(xs), max(ys))


def _drop_duplicates(pts: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for v in pts:
        if not out or out[-1] != v:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _drop_collinear(pts: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Remove vertices lying strictly between their neighbours on a straight run."""
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        m = len(pts)
        keep = []
        for i in range(m):
            ax, ay = pts[i - 1]
            bx, by = pts[i]
            cx, cy = pts[(i + 1) % m]
            straight = (ax == bx == cx and (ay < by < cy or ay > by > cy)) or (
                ay == by == cy and (ax < bx < cx or ax > bx > cx)
            )
            if straight:
                changed = True
            else:
                keep.append(pts[i])
        # Removing in one pass can expose new straight runs; iterate to a fixpoint.
        pts = keep
    return pts


def check_simple(vertices: Sequence[tuple[int, int]]) -> None:
    """Raise :class:`SelfIntersecting` unless the ring is simple.

    Axis-parallel segments meet exactly when their closed bounding boxes
    overlap, so non-adjacent edges must have disjoint extents.  Adjacent edges
    share one endpoint and, being perpendicular, nothing else.
    """
    v = np.asarray(vertices, dtype=np.int64)
    w = np.roll(v, -1, axis=0)
    lo = np.minimum(v, w)
    hi = np.maximum(v, w)
    overlap = np.all(
        np.maximum(lo[:, None, :], lo[None, :, :]) <= np.minimum(hi[:, None, :], hi[None, :, :]),
        axis=2,
    )
    m = len(v)
    idx = np.arange(m)
    gap = (idx[None, :] - idx[:, None]) % m
    overlap &= (gap != 0) & (gap != 1) & (gap != m - 1)
    if overlap.any():
        i, j = np.argwhere(overlap)[0]
        raise SelfIntersecting(f"edges {i} and {j} touch")


def validate_polygon(
    raw: Iterable[Sequence[int]],
    polygon_id: int = 0,
    *,
    check_simplicity: bool | None = None,
) -> RectilinearPolygon:
    """Normalize a raw vertex list and check every polygon invariant.

    ``check_simplicity=None`` runs the O(E^2) check only for rings with at
    most :data:`SIMPLICITY_CHECK_MAX_EDGES` edges.
    """
    pts = []
    for v in raw:
        x, y = int(v[0]), int(v[1])
        if not (COORD_MIN <= x <= COORD_MAX and COORD_MIN <= y <= COORD_MAX):
            raise OutOfRange(f"vertex ({x}, {y}) does not fit in 32 bits")
        pts.append((x, y))
    pts = _drop_duplicates(pts)
    m = len(pts)
    for i in range(m):
        (x1, y1), (x2, y2) = pts[i], pts[(i + 1) % m]
        if x1 != x2 and y1 != y2:
            raise NotRectilinear(f"diagonal edge ({x1}, {y1}) -> ({x2}, {y2})")
    pts = _drop_collinear(pts)
    if len(pts) < 4:
        raise Degenerate(f"ring has {len(pts)} distinct corners, need at least 4")
    m = len(pts)
    for i in range(m):
        (x0, y0), (x1, y1), (x2, y2) = pts[i - 1], pts[i], pts[(i + 1) % m]
        if (x0 == x1) == (x1 == x2):
            # Consecutive edges on one line that survived collinear removal fold back.
            raise SelfIntersecting(f"edge folds back on itself at ({x1}, {y1})")
    a2 = signed_area2(pts)
    if a2 == 0:
        raise Degenerate("zero area")
    if a2 < 0:
        pts = [pts[0]] + pts[:0:-1]
    if check_simplicity is None:
        check_simplicity = len(pts) <= SIMPLICITY_CHECK_MAX_EDGES
    if check_simplicity:
        check_simple(pts)
    mbr = compute_mbr(pts)
    return RectilinearPolygon(int(polygon_id), tuple(pts), mbr, abs(a2) // 2)
