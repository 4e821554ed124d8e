"""Packed Hilbert R-tree over polygon MBRs and the MBR join built on it."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Mbr, RectilinearPolygon

DEFAULT_ORDER = 16
DEFAULT_FANOUT = 16


class EmptyInput(ValueError):
    pass


def hilbert_value(x: int, y: int, k: int = DEFAULT_ORDER) -> int:
    """Index of cell (x, y) along the order-``k`` Hilbert curve."""
    n = 1 << k
    if not (0 <= x < n and 0 <= y < n):
        raise ValueError(f"({x}, {y}) outside the {n}x{n} grid")
    d = 0
    s = n >> 1
    while s > 0:
        rx = 1 if x & s else 0
        ry = 1 if y & s else 0
        d += s * s * ((3 * rx) ^ ry)
        if ry == 0:
            if rx == 1:
                x = s - 1 - (x & (s - 1))
                y = s - 1 - (y & (s - 1))
            x, y = y, x
        s >>= 1
    return d


def hilbert_point(d: int, k: int = DEFAULT_ORDER) -> tuple[int, int]:
    """Inverse of :func:`hilbert_value`."""
    n = 1 << k
    if not 0 <= d < n * n:
        raise ValueError(f"index {d} outside [0, {n * n})")
    x = y = 0
    t = d
    s = 1
    while s < n:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def _hilbert_values(xs: np.ndarray, ys: np.ndarray, k: int) -> np.ndarray:
    x = xs.astype(np.int64).copy()
    y = ys.astype(np.int64).copy()
    d = np.zeros(len(x), dtype=np.int64)
    s = 1 << (k - 1)
    while s > 0:
        rx = (x & s) > 0
        ry = (y & s) > 0
        d += s * s * ((3 * rx.astype(np.int64)) ^ ry.astype(np.int64))
        x &= s - 1
        y &= s - 1
        flip = (~ry) & rx
        x = np.where(flip, s - 1 - x, x)
        y = np.where(flip, s - 1 - y, y)
        swap = ~ry
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        s >>= 1
    return d


@dataclass(frozen=True)
class CandidatePair:
    p_ref: int
    q_ref: int
    joint_mbr: Mbr


class HilbertRTree:
    """Bulk-loaded R-tree; leaves are items in Hilbert order of MBR centers.

    ``levels[0]`` holds item boxes, each later level one box per group of
    ``fanout`` boxes from the level below, ending at the single root.
    """

    def __init__(self, polygons: Sequence[RectilinearPolygon], order: int = DEFAULT_ORDER, fanout: int = DEFAULT_FANOUT):
        if len(polygons) == 0:
            raise EmptyInput("cannot index an empty polygon list")
        if fanout < 2:
            raise ValueError("fanout must be >= 2")
        self.order = order
        self.fanout = fanout
        self.polygons = list(polygons)
        boxes = np.array(
            [(p.mbr.xlo, p.mbr.ylo, p.mbr.xhi, p.mbr.yhi) for p in self.polygons], dtype=np.int64
        )
        ids = np.array([p.id for p in self.polygons], dtype=np.int64)
        cx = (boxes[:, 0] + boxes[:, 2]) // 2
        cy = (boxes[:, 1] + boxes[:, 3]) // 2
        top = (1 << order) - 1
        fx0, fy0 = cx.min(), cy.min()
        spanx = max(int(cx.max() - fx0), 1)
        spany = max(int(cy.max() - fy0), 1)
        hx = (cx - fx0) * top // spanx
        hy = (cy - fy0) * top // spany
        self.hilbert = _hilbert_values(hx, hy, order)
        # lexsort keys: last is primary
        self.order_index = np.lexsort((ids, self.hilbert))
        self.hilbert = self.hilbert[self.order_index]
        self.levels = [boxes[self.order_index]]
        while True:
            prev = self.levels[-1]
            groups = np.arange(0, len(prev), fanout)
            node = np.empty((len(groups), 4), dtype=np.int64)
            node[:, 0] = np.minimum.reduceat(prev[:, 0], groups)
            node[:, 1] = np.minimum.reduceat(prev[:, 1], groups)
            node[:, 2] = np.maximum.reduceat(prev[:, 2], groups)
            node[:, 3] = np.maximum.reduceat(prev[:, 3], groups)
            self.levels.append(node)
            if len(node) == 1:
                break
        self._ids = ids

    @property
    def height(self) -> int:
        return len(self.levels) - 1

    @property
    def root_mbr(self) -> Mbr:
        return Mbr(*(int(v) for v in self.levels[-1][0]))

    def __len__(self) -> int:
        return len(self.polygons)

    def query(self, probe: Mbr) -> list[int]:
        """Indices of polygons whose MBR shares at least one pixel with ``probe``,
        ordered by polygon id."""
        out: list[int] = []
        stack = [(len(self.levels) - 1, 0)]
        while stack:
            level, node = stack.pop()
            below = self.levels[level - 1]
            lo = node * self.fanout
            hi = min(lo + self.fanout, len(below))
            b = below[lo:hi]
            hit = np.nonzero(
                (b[:, 0] < probe.xhi) & (probe.xlo < b[:, 2]) & (b[:, 1] < probe.yhi) & (probe.ylo < b[:, 3])
            )[0]
            if level == 1:
                out.extend(int(self.order_index[lo + h]) for h in hit)
            else:
                stack.extend((level - 1, lo + int(h)) for h in hit)
        out.sort(key=lambda i: self._ids[i])
        return out


def build_index(polygons: Sequence[RectilinearPolygon], **kw) -> HilbertRTree:
    return HilbertRTree(polygons, **kw)


def query(tree: HilbertRTree, probe: Mbr) -> list[int]:
    return tree.query(probe)


def mbr_join(
    set_p: Sequence[RectilinearPolygon],
    set_q: Sequence[RectilinearPolygon],
    tree: HilbertRTree | None = None,
) -> list[CandidatePair]:
    """All (p, q) pairs with intersecting MBRs, in (p.id, q.id) order.

    The larger set is indexed and probed with the smaller one.  A prebuilt
    ``tree`` must index exactly that larger set.
    """
    if not set_p or not set_q:
        return []
    index_q = len(set_q) >= len(set_p)
    indexed, probes = (set_q, set_p) if index_q else (set_p, set_q)
    if tree is None:
        tree = HilbertRTree(indexed)
    elif tree.polygons != list(indexed):
        raise ValueError("prebuilt tree does not index the larger set")
    pairs = []
    for i, poly in enumerate(probes):
        for j in tree.query(poly.mbr):
            pi, qj = (i, j) if index_q else (j, i)
            joint = set_p[pi].mbr.intersection(set_q[qj].mbr)
            pairs.append(CandidatePair(pi, qj, joint))
    pairs.sort(key=lambda c: (set_p[c.p_ref].id, set_q[c.q_ref].id))
    return pairs


def join_index_for(set_p: Sequence[RectilinearPolygon], set_q: Sequence[RectilinearPolygon]) -> HilbertRTree | None:
    """The tree :func:`mbr_join` would build for this pair of sets."""
    if not set_p or not set_q:
        return None
    return HilbertRTree(set_q if len(set_q) >= len(set_p) else set_p)
