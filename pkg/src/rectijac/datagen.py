"""Synthetic segmentation corpora: pairs of polygon sets per image tile.

Polygons are grown by randomized cell accretion, which keeps every shape
4-connected, hole-free and pinch-free, so its traced boundary is a simple
rectilinear ring whose area equals the cell count.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geometry import RectilinearPolygon, validate_polygon
from .parser import PolygonFile, SourceFormat, save_polygon_file

# Neighbours in cyclic order starting north, going clockwise.
_RING = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_ORTHO = ((0, 1), (1, 0), (0, -1), (-1, 0))

TILE_SPAN = 8192
SHELF_WIDTH = 1024
GAP = 3

_STREAM_SHAPE = 0
_STREAM_PERTURB = 1
_STREAM_AREA = 2


@dataclass(frozen=True)
class GenSpec:
    seed: int = 0
    tiles: int = 4
    polygons_per_tile: int = 100
    mean_area: float = 150.0
    area_stddev: float = 100.0
    scale_factor: int = 1
    perturbation: float = 0.3
    drop: float = 0.0
    image: str = "synthetic"

    def __post_init__(self):
        if not 1 <= self.scale_factor <= 5:
            raise ValueError("scale_factor must be in 1..5")
        if self.tiles < 1 or self.polygons_per_tile < 0:
            raise ValueError("tiles must be >= 1 and polygons_per_tile >= 0")
        if not (0.0 <= self.perturbation <= 1.0 and 0.0 <= self.drop <= 1.0):
            raise ValueError("perturbation and drop are fractions in [0, 1]")


def keyed_rng(seed: int, tile: int, index: int, stream: int) -> np.random.Generator:
    """Independent generator per (seed, tile, polygon, stream) key."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, tile, index, stream])


def _addable(cell: tuple[int, int], cells: set) -> bool:
    x, y = cell
    occ = [(x + dx, y + dy) in cells for dx, dy in _RING]
    rises = sum(1 for i in range(8) if occ[i] and not occ[i - 1])
    if rises != 1:
        return False
    for d in (1, 3, 5, 7):
        if occ[d] and not occ[d - 1] and not occ[(d + 1) % 8]:
            return False
    return True


def accrete(rng: np.random.Generator, cells: set, extra: int) -> set:
    """Add ``extra`` cells to a region without creating holes or pinches."""
    cells = set(cells)
    frontier = []
    for x, y in cells:
        for dx, dy in _ORTHO:
            c = (x + dx, y + dy)
            if c not in cells:
                frontier.append(c)
    # A deterministic order keeps generation reproducible across runs.
    frontier.sort()
    goal = len(cells) + extra
    while len(cells) < goal:
        if not frontier:
            frontier = sorted(
                {(x + dx, y + dy) for x, y in cells for dx, dy in _ORTHO} - cells
            )
        k = int(rng.integers(len(frontier)))
        frontier[k], frontier[-1] = frontier[-1], frontier[k]
        c = frontier.pop()
        if c in cells or not _addable(c, cells):
            continue
        cells.add(c)
        x, y = c
        for dx, dy in _ORTHO:
            n = (x + dx, y + dy)
            if n not in cells:
                frontier.append(n)
    return cells


def trace_boundary(cells: set) -> list[tuple[int, int]]:
    """Counter-clockwise boundary ring of a simply connected, pinch-free cell set."""
    edges = {}
    for x, y in cells:
        for a, b in (
            ((x, y), (x + 1, y)),
            ((x + 1, y), (x + 1, y + 1)),
            ((x + 1, y + 1), (x, y + 1)),
            ((x, y + 1), (x, y)),
        ):
            if edges.pop((b, a), None) is None:
                edges[(a, b)] = True
    succ = {a: b for a, b in edges}
    start = min(succ)
    ring = [start]
    v = succ[start]
    while v != start:
        ring.append(v)
        v = succ[v]
    return ring


def gen_cells(rng: np.random.Generator, target_area: int) -> set:
    if target_area < 1:
        raise ValueError("target_area must be >= 1")
    return accrete(rng, {(0, 0)}, target_area - 1)


def cells_to_polygon(cells: set, polygon_id: int = 0) -> RectilinearPolygon:
    return validate_polygon(trace_boundary(cells), polygon_id)


def gen_polygon(rng: np.random.Generator, target_area: int, polygon_id: int = 0) -> RectilinearPolygon:
    """Random connected rectilinear polygon of exactly ``target_area`` pixels."""
    return cells_to_polygon(gen_cells(rng, target_area), polygon_id)


def draw_area(rng: np.random.Generator, mean: float, stddev: float) -> int:
    """Gamma-distributed target area with the given mean and spread."""
    if stddev <= 0:
        return max(1, int(round(mean)))
    shape = (mean / stddev) ** 2
    scale = stddev**2 / mean
    return max(1, int(round(rng.gamma(shape, scale))))


def tile_origin(spec: GenSpec, tile: int) -> tuple[int, int, int, int]:
    """(row, col, x0, y0) of a tile in the image grid."""
    cols = math.ceil(math.sqrt(spec.tiles))
    row, col = divmod(tile, cols)
    return row, col, col * TILE_SPAN, row * TILE_SPAN


def gen_tile_pair(spec: GenSpec, tile: int) -> tuple[PolygonFile, PolygonFile]:
    """Set A laid out without overlaps, and a perturbed, thinned copy as set B."""
    row, col, ox, oy = tile_origin(spec, tile)
    tile_id = f"{spec.image}.{row}.{col}"
    shapes = []
    for i in range(spec.polygons_per_tile):
        area = draw_area(keyed_rng(spec.seed, tile, i, _STREAM_AREA), spec.mean_area, spec.area_stddev)
        shapes.append(gen_cells(keyed_rng(spec.seed, tile, i, _STREAM_SHAPE), area))

    # Shelf packing: left to right, new shelf when the row is full.
    placed = []
    x = y = shelf_h = 0
    for cells in shapes:
        xs = [c[0] for c in cells]
        ys = [c[1] for c in cells]
        w = max(xs) - min(xs) + 1
        h = max(ys) - min(ys) + 1
        if x > 0 and x + w > SHELF_WIDTH:
            x, y, shelf_h = 0, y + shelf_h + GAP, 0
        dx, dy = ox + x - min(xs), oy + y - min(ys)
        placed.append({(cx + dx, cy + dy) for cx, cy in cells})
        x += w + GAP
        shelf_h = max(shelf_h, h)

    set_a, set_b = [], []
    s = spec.scale_factor
    for i, cells in enumerate(placed):
        poly = cells_to_polygon(cells, i)
        set_a.append(poly.scale(s) if s != 1 else poly)
        rng = keyed_rng(spec.seed, tile, i, _STREAM_PERTURB)
        if rng.random() < spec.drop:
            continue
        if rng.random() < spec.perturbation:
            if rng.random() < 0.5:
                mags = rng.integers(1, 3, size=2) * rng.choice([-1, 1], size=2)
                keep = rng.integers(3)  # 0: both axes, 1: x only, 2: y only
                dx = int(mags[0]) if keep != 2 else 0
                dy = int(mags[1]) if keep != 1 else 0
                poly = poly.translate(dx, dy)
            else:
                extra = max(1, len(cells) // 10)
                poly = cells_to_polygon(accrete(rng, cells, extra), i)
        set_b.append(poly.scale(s) if s != 1 else poly)
    return (
        PolygonFile(tile_id, tuple(set_a), SourceFormat.CSV),
        PolygonFile(tile_id, tuple(set_b), SourceFormat.CSV),
    )


def write_corpus(
    spec: GenSpec, out_dir: str | os.PathLike, fmt: SourceFormat | str = SourceFormat.CSV
) -> dict:
    """Write ``a/`` and ``b/`` tile files plus ``manifest.json``; return the manifest."""
    out = Path(out_dir)
    (out / "a").mkdir(parents=True, exist_ok=True)
    (out / "b").mkdir(parents=True, exist_ok=True)
    tiles = []
    for t in range(spec.tiles):
        fa, fb = gen_tile_pair(spec, t)
        pa = out / "a" / f"{fa.tile_id}.a.poly"
        pb = out / "b" / f"{fb.tile_id}.b.poly"
        save_polygon_file(fa, pa, fmt)
        save_polygon_file(fb, pb, fmt)
        tiles.append({"tile_id": fa.tile_id, "a": str(pa.relative_to(out)), "b": str(pb.relative_to(out))})
    manifest = {"image": spec.image, "spec": asdict(spec), "format": SourceFormat(fmt).value, "tiles": tiles}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_manifest(path: str | os.PathLike) -> list[tuple[str, Path, Path]]:
    path = Path(path)
    base = path.parent
    m = json.loads(path.read_text())
    return [(t["tile_id"], base / t["a"], base / t["b"]) for t in m["tiles"]]
