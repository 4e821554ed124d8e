"""Exact area of intersection for rectilinear polygon pairs.

The sampling-box engine starts from the pair's joint MBR, classifies sub-boxes
against each polygon as inside, outside or hovering, settles every box whose
contribution is already known, and falls back to per-pixel tests once a box
holds fewer than ``pixel_threshold`` pixels.  The union is never scanned; it
follows from ``|p u q| = |p| + |q| - |p n q|``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from . import _kernels as K
from .geometry import Mbr, RectilinearPolygon, pixel_in_polygon, polygon_area


class StackOverflow(RuntimeError):
    """The preallocated sampling-box stack was too small (an engine bug)."""


class PairError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"pair {index}: {cause}")
        self.index = index
        self.cause = cause


class BoxPosition(enum.IntEnum):
    INSIDE = K.INSIDE
    OUTSIDE = K.OUTSIDE
    HOVER = K.HOVER


@dataclass(frozen=True)
class SamplingBox:
    bounds: Mbr
    probe: bool = True

    def __post_init__(self):
        if self.bounds.is_empty:
            raise ValueError(f"empty sampling box {self.bounds}")

    @property
    def size(self) -> int:
        return self.bounds.size


@dataclass(frozen=True)
class PixelBoxConfig:
    """Engine parameters.

    ``group_size`` is the number of cooperating workers per pair; the
    pixelization threshold and the fan-out default to ``group_size**2 // 2``
    and ``group_size``.
    """

    group_size: int = 64
    pixel_threshold: int | None = None
    fanout: int | None = None

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be positive")
        if self.pixel_threshold is None:
            object.__setattr__(self, "pixel_threshold", max(1, self.group_size**2 // 2))
        if self.fanout is None:
            object.__setattr__(self, "fanout", max(2, self.group_size))
        if self.pixel_threshold < 1:
            raise ValueError("pixel_threshold must be >= 1")
        if self.fanout < 2:
            raise ValueError("fanout must be >= 2")

    def scalar(self) -> PixelBoxConfig:
        """Same threshold with quadtree fan-out, for the scalar CPU path."""
        return PixelBoxConfig(self.group_size, self.pixel_threshold, 4)


@dataclass(frozen=True)
class PairAreas:
    area_p: int
    area_q: int
    area_intersection: int

    @property
    def area_union(self) -> int:
        return self.area_p + self.area_q - self.area_intersection


class PackedPolygons:
    """A polygon set laid out as contiguous edge arrays for the kernels."""

    __slots__ = ("polygons", "vx", "vylo", "vyhi", "hy", "hxlo", "hxhi", "offsets", "areas", "mbrs")

    def __init__(self, polygons: Sequence[RectilinearPolygon]):
        self.polygons = tuple(polygons)
        parts = [p.edge_arrays for p in self.polygons]
        counts = [len(e[0]) for e in parts]
        self.offsets = np.zeros(len(parts) + 1, dtype=np.int64)
        np.cumsum(counts, out=self.offsets[1:])
        cols = []
        for c in range(6):
            if parts:
                cols.append(np.ascontiguousarray(np.concatenate([e[c] for e in parts])))
            else:
                cols.append(np.zeros(0, dtype=np.int64))
        self.vx, self.vylo, self.vyhi, self.hy, self.hxlo, self.hxhi = cols
        self.areas = np.array([p.area for p in self.polygons], dtype=np.int64)
        self.mbrs = np.array(
            [(p.mbr.xlo, p.mbr.ylo, p.mbr.xhi, p.mbr.yhi) for p in self.polygons], dtype=np.int64
        ).reshape(-1, 4)

    def __len__(self) -> int:
        return len(self.polygons)

    def kernel_args(self):
        return (self.vx, self.vylo, self.vyhi, self.hy, self.hxlo, self.hxhi, self.offsets)


def _square_side(fanout: int) -> int:
    r = math.isqrt(fanout)
    return r if r * r == fanout else 0


def box_position(b: SamplingBox | Mbr, p: RectilinearPolygon) -> BoxPosition:
    bounds = b.bounds if isinstance(b, SamplingBox) else b
    vx, vylo, vyhi, hy, hxlo, hxhi = p.edge_arrays
    return BoxPosition(
        K.box_position(
            vx, vylo, vyhi, hy, hxlo, hxhi, 0, len(vx),
            bounds.xlo, bounds.ylo, bounds.xhi, bounds.yhi,
        )
    )


def partition_box(b: SamplingBox | Mbr, fanout: int) -> list[SamplingBox]:
    """Split a box into at most ``fanout`` disjoint sub-boxes covering it.

    Perfect-square fan-outs cut a grid when both sides exceed one pixel;
    otherwise the longer side is cut into near-equal strips.
    """
    bounds = b.bounds if isinstance(b, SamplingBox) else b
    if fanout < 2:
        raise ValueError("fanout must be >= 2")
    if bounds.size <= 1:
        raise ValueError("cannot partition a single pixel")
    out = [np.empty(fanout, dtype=np.int64) for _ in range(4)]
    n = K.partition_into(
        bounds.xlo, bounds.ylo, bounds.xhi, bounds.yhi, fanout, _square_side(fanout), *out, 0
    )
    return [SamplingBox(Mbr(int(out[0][i]), int(out[1][i]), int(out[2][i]), int(out[3][i]))) for i in range(n)]


def box_continue(f1: BoxPosition, f2: BoxPosition) -> bool:
    return (f1 == BoxPosition.HOVER and f2 != BoxPosition.OUTSIDE) or (
        f2 == BoxPosition.HOVER and f1 != BoxPosition.OUTSIDE
    )


def box_contribute(f1: BoxPosition, f2: BoxPosition) -> bool:
    return f1 == BoxPosition.INSIDE and f2 == BoxPosition.INSIDE


def _run_batch(
    packed_p: PackedPolygons,
    packed_q: PackedPolygons,
    pidx: np.ndarray,
    qidx: np.ndarray,
    cfg: PixelBoxConfig,
    *,
    nosep: bool = False,
    stack_capacity: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    pidx = np.ascontiguousarray(pidx, dtype=np.int64)
    qidx = np.ascontiguousarray(qidx, dtype=np.int64)
    a = packed_p.mbrs[pidx]
    b = packed_q.mbrs[qidx]
    if nosep:
        roots = np.concatenate([np.minimum(a[:, :2], b[:, :2]), np.maximum(a[:, 2:], b[:, 2:])], axis=1)
    else:
        roots = np.concatenate([np.maximum(a[:, :2], b[:, :2]), np.minimum(a[:, 2:], b[:, 2:])], axis=1)
    roots = np.ascontiguousarray(roots, dtype=np.int64)
    inter, uni, status, failed = K.sampling_box_batch(
        *packed_p.kernel_args(), *packed_q.kernel_args(),
        pidx, qidx, roots, cfg.pixel_threshold, cfg.fanout, nosep, stack_capacity,
    )
    if status == K.STATUS_STACK_OVERFLOW:
        raise PairError(int(failed), StackOverflow("sampling-box stack capacity exceeded"))
    return inter, uni


def intersection_areas(
    packed_p: PackedPolygons,
    packed_q: PackedPolygons,
    pidx: np.ndarray,
    qidx: np.ndarray,
    cfg: PixelBoxConfig,
    *,
    stack_capacity: int = 0,
) -> np.ndarray:
    """Array form of the engine: intersection pixel counts for index pairs."""
    return _run_batch(packed_p, packed_q, pidx, qidx, cfg, stack_capacity=stack_capacity)[0]


def nosep_areas(
    packed_p: PackedPolygons, packed_q: PackedPolygons, pidx, qidx, cfg: PixelBoxConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Baseline that refines union-undecided boxes too and tallies the union directly.

    Its root box is the bounding box of both MBRs, since the union reaches
    outside their overlap.
    """
    return _run_batch(packed_p, packed_q, pidx, qidx, cfg, nosep=True)


def pixel_scan_areas(packed_p: PackedPolygons, packed_q: PackedPolygons, pidx, qidx) -> np.ndarray:
    """Per-pixel scan of each pair's joint MBR (the pixel-only baseline)."""
    pidx = np.ascontiguousarray(pidx, dtype=np.int64)
    qidx = np.ascontiguousarray(qidx, dtype=np.int64)
    a = packed_p.mbrs[pidx]
    b = packed_q.mbrs[qidx]
    roots = np.ascontiguousarray(
        np.concatenate([np.maximum(a[:, :2], b[:, :2]), np.minimum(a[:, 2:], b[:, 2:])], axis=1)
    )
    return K.pixel_scan_batch(
        packed_p.vx, packed_p.vylo, packed_p.vyhi, packed_p.offsets,
        packed_q.vx, packed_q.vylo, packed_q.vyhi, packed_q.offsets,
        pidx, qidx, roots,
    )


def pixel_only_areas(
    packed_p: PackedPolygons, packed_q: PackedPolygons, pidx, qidx
) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-only baseline: (intersection, union) counted pixel by pixel over
    the bounding box of both MBRs."""
    pidx = np.ascontiguousarray(pidx, dtype=np.int64)
    qidx = np.ascontiguousarray(qidx, dtype=np.int64)
    a = packed_p.mbrs[pidx]
    b = packed_q.mbrs[qidx]
    roots = np.ascontiguousarray(
        np.concatenate([np.minimum(a[:, :2], b[:, :2]), np.maximum(a[:, 2:], b[:, 2:])], axis=1)
    )
    return K.pixel_only_batch(
        packed_p.vx, packed_p.vylo, packed_p.vyhi, packed_p.offsets,
        packed_q.vx, packed_q.vylo, packed_q.vyhi, packed_q.offsets,
        pidx, qidx, roots,
    )


def intersection_area_pixelbox(
    p: RectilinearPolygon, q: RectilinearPolygon, cfg: PixelBoxConfig | None = None
) -> PairAreas:
    cfg = cfg or PixelBoxConfig()
    pp, qq = PackedPolygons([p]), PackedPolygons([q])
    zero = np.zeros(1, dtype=np.int64)
    try:
        inter = intersection_areas(pp, qq, zero, zero, cfg)
    except PairError as exc:
        raise exc.cause from None
    return PairAreas(polygon_area(p), polygon_area(q), int(inter[0]))


def intersection_area_oracle(p: RectilinearPolygon, q: RectilinearPolygon) -> PairAreas:
    zero = np.zeros(1, dtype=np.int64)
    inter = pixel_scan_areas(PackedPolygons([p]), PackedPolygons([q]), zero, zero)
    return PairAreas(polygon_area(p), polygon_area(q), int(inter[0]))


def pair_ratio(a: PairAreas) -> float | None:
    """Intersection over union, or None for pairs that do not overlap."""
    if a.area_intersection == 0:
        return None
    return a.area_intersection / a.area_union


def pair_ratio_exact(a: PairAreas) -> Fraction | None:
    if a.area_intersection == 0:
        return None
    return Fraction(a.area_intersection, a.area_union)


def split_evenly(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n))
    base, extra = divmod(n, parts)
    out, start = [], 0
    for i in range(parts):
        stop = start + base + (1 if i < extra else 0)
        out.append((start, stop))
        start = stop
    return out


def intersection_area_batch(
    pairs: Sequence,
    set_p: Sequence[RectilinearPolygon] | PackedPolygons,
    set_q: Sequence[RectilinearPolygon] | PackedPolygons,
    cfg: PixelBoxConfig | None = None,
    pool=None,
) -> list[PairAreas]:
    """Evaluate candidate pairs (objects with ``p_ref``/``q_ref`` or index
    tuples) against two polygon sets, in input order.

    With a pool, contiguous chunks run on its workers; results are identical
    to the sequential evaluation whatever the pool width.
    """
    cfg = cfg or PixelBoxConfig()
    packed_p = set_p if isinstance(set_p, PackedPolygons) else PackedPolygons(set_p)
    packed_q = set_q if isinstance(set_q, PackedPolygons) else PackedPolygons(set_q)
    if len(pairs) == 0:
        return []
    idx = np.array(
        [(c.p_ref, c.q_ref) if hasattr(c, "p_ref") else (c[0], c[1]) for c in pairs], dtype=np.int64
    )
    pidx, qidx = idx[:, 0], idx[:, 1]

    def work(bounds):
        lo, hi = bounds
        try:
            return intersection_areas(packed_p, packed_q, pidx[lo:hi], qidx[lo:hi], cfg)
        except PairError as exc:
            raise PairError(lo + exc.index, exc.cause) from None

    if pool is None:
        chunks = [work((0, len(pidx)))]
    else:
        chunks = pool.run_batch(work, split_evenly(len(pidx), pool.width))
    inter = np.concatenate(chunks)
    return [
        PairAreas(int(packed_p.areas[i]), int(packed_q.areas[j]), int(v))
        for i, j, v in zip(pidx, qidx, inter)
    ]


def iter_sampling_steps(
    p: RectilinearPolygon, q: RectilinearPolygon, cfg: PixelBoxConfig | None = None
) -> Iterator[tuple[list[SamplingBox], int]]:
    """Step through the engine in Python, yielding ``(live stack, tally)``
    after every pop.  Slow; meant for inspecting the stack discipline.
    """
    cfg = cfg or PixelBoxConfig()
    root = p.mbr.intersection(q.mbr)
    if root.is_empty:
        return
    stack = [SamplingBox(root, True)]
    tally = 0
    while stack:
        box = stack.pop()
        if box.probe:
            if box.size < cfg.pixel_threshold or box.size == 1:
                for px in box.bounds.pixels():
                    if pixel_in_polygon(px, p) and pixel_in_polygon(px, q):
                        tally += 1
            else:
                stack.append(SamplingBox(box.bounds, False))
                for sub in partition_box(box, cfg.fanout):
                    f1, f2 = box_position(sub, p), box_position(sub, q)
                    c = box_continue(f1, f2)
                    if not c and box_contribute(f1, f2):
                        tally += sub.size
                    stack.append(SamplingBox(sub.bounds, c))
        yield list(stack), tally
