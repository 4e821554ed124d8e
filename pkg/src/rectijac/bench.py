"""Benchmark suites: engine comparison, threshold sweep, execution schemes,
and migration on/off under throttled pools.

Every suite works on a corpus generated in memory, so no timing includes
disk I/O.  Each measurement is repeated and the median reported.
"""
from __future__ import annotations

import json
import os
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .datagen import GenSpec, gen_tile_pair
from .index import mbr_join
from .migration import MigrationPolicy
from .parser import to_csv
from .pipeline import PipelineConfig, TileTask, run_multistream, run_pipeline, run_sequential
from .pixelbox import (
    PackedPolygons,
    PixelBoxConfig,
    intersection_areas,
    nosep_areas,
    pixel_only_areas,
)

SUITES = ("fig8", "fig10", "table1", "fig11")


def timed(fn: Callable[[], object], repeats: int = 3, warmup: int = 1) -> dict:
    """Median wall time of ``fn`` over ``repeats`` runs after ``warmup`` runs."""
    for _ in range(warmup):
        fn()
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return {"median_s": statistics.median(runs), "runs_s": runs}


@dataclass
class PairWorkload:
    """Candidate pairs of two polygon sets, packed for the kernels."""

    packed_a: PackedPolygons
    packed_b: PackedPolygons
    pidx: np.ndarray
    qidx: np.ndarray

    def __len__(self) -> int:
        return len(self.pidx)


@dataclass
class BasePairs:
    polygons_a: list
    polygons_b: list
    pidx: np.ndarray
    qidx: np.ndarray

    def scaled(self, factor: int) -> PairWorkload:
        # Dilation keeps MBR overlaps, so the candidate pairs carry over.
        a = [p.scale(factor) for p in self.polygons_a] if factor != 1 else self.polygons_a
        b = [p.scale(factor) for p in self.polygons_b] if factor != 1 else self.polygons_b
        return PairWorkload(PackedPolygons(a), PackedPolygons(b), self.pidx, self.qidx)


def base_pairs(min_pairs: int, seed: int = 0, polygons_per_tile: int = 100, perturbation: float = 1.0) -> BasePairs:
    """Generate tiles until the MBR join yields at least ``min_pairs`` pairs.

    The default perturbation jitters every set-B polygon, as two independent
    segmentations would.
    """
    spec = GenSpec(seed=seed, tiles=1024, polygons_per_tile=polygons_per_tile, perturbation=perturbation)
    a, b, pi, qi = [], [], [], []
    tile = 0
    while len(pi) < min_pairs:
        fa, fb = gen_tile_pair(spec, tile)
        for c in mbr_join(fa.polygons, fb.polygons):
            pi.append(c.p_ref + len(a))
            qi.append(c.q_ref + len(b))
        a.extend(fa.polygons)
        b.extend(fb.polygons)
        tile += 1
    return BasePairs(a, b, np.array(pi, dtype=np.int64), np.array(qi, dtype=np.int64))


def fig8(base: BasePairs, scales=(1, 2, 3, 4, 5), cfg: PixelBoxConfig | None = None, repeats: int = 3) -> list[dict]:
    """Pixel-only vs sampling boxes without and with the indirect union."""
    cfg = cfg or PixelBoxConfig()
    rows = []
    for s in scales:
        w = base.scaled(s)
        rows.append({
            "scale": s,
            "pairs": len(w),
            "pixel_only_s": timed(lambda: pixel_only_areas(w.packed_a, w.packed_b, w.pidx, w.qidx), repeats)["median_s"],
            "nosep_s": timed(lambda: nosep_areas(w.packed_a, w.packed_b, w.pidx, w.qidx, cfg), repeats)["median_s"],
            "pixelbox_s": timed(lambda: intersection_areas(w.packed_a, w.packed_b, w.pidx, w.qidx, cfg), repeats)["median_s"],
        })
    return rows


def threshold_grid(n: int) -> dict[str, int]:
    return {
        "n/2": max(1, n // 2),
        "n": n,
        "n^2/8": max(1, n * n // 8),
        "n^2/2": max(1, n * n // 2),
        "n^2": n * n,
        "4n^2": 4 * n * n,
        "16n^2": 16 * n * n,
    }


def fig10(base: BasePairs, scale: int = 5, group_size: int = 64, repeats: int = 3) -> list[dict]:
    """Runtime against the pixelization threshold, fanout fixed at n."""
    w = base.scaled(scale)
    rows = []
    for label, t in threshold_grid(group_size).items():
        cfg = PixelBoxConfig(group_size, t, group_size)
        r = timed(lambda: intersection_areas(w.packed_a, w.packed_b, w.pidx, w.qidx, cfg), repeats)
        rows.append({"label": label, "threshold": t, "pairs": len(w), "time_s": r["median_s"]})
    return rows


@dataclass
class MemoryCorpus:
    """Tile files serialized as CSV bytes, kept in memory."""

    tiles: list[tuple[str, bytes, bytes]] = field(default_factory=list)

    @classmethod
    def generate(cls, spec: GenSpec) -> MemoryCorpus:
        out = cls()
        for t in range(spec.tiles):
            fa, fb = gen_tile_pair(spec, t)
            out.tiles.append((fa.tile_id, to_csv(fa).encode(), to_csv(fb).encode()))
        return out

    def tasks(self) -> list[TileTask]:
        """Fresh unparsed tasks; parsing happens inside the measured run."""
        return [
            TileTask(tid, i, Path(f"{tid}.a.poly"), Path(f"{tid}.b.poly"), raw_a=ra, raw_b=rb)
            for i, (tid, ra, rb) in enumerate(self.tiles)
        ]

    def __len__(self) -> int:
        return len(self.tiles)


def _scheme_run(corpus: MemoryCorpus, scheme: str, cfg: PipelineConfig) -> dict:
    t0 = time.perf_counter()
    if scheme == "sequential":
        rep = run_sequential(corpus.tasks(), replace(cfg, workers=1))
    elif scheme == "multistream":
        rep = run_multistream(corpus.tasks(), cfg)
    else:
        rep = run_pipeline(corpus.tasks(), cfg)
    return {"wall_s": time.perf_counter() - t0, "report": rep}


def measure_scheme(corpus: MemoryCorpus, scheme: str, cfg: PipelineConfig, repeats: int = 3) -> dict:
    runs = [_scheme_run(corpus, scheme, cfg) for _ in range(repeats)]
    walls = [r["wall_s"] for r in runs]
    wall = statistics.median(walls)
    last = runs[-1]["report"]
    return {
        "scheme": scheme,
        "tiles": len(corpus),
        "wall_s": wall,
        "runs_s": walls,
        "tiles_per_s": len(corpus) / wall if wall > 0 else float("inf"),
        "jaccard": last.jaccard,
        "migration": last.migration,
    }


def table1(corpus: MemoryCorpus, cfg: PipelineConfig | None = None, repeats: int = 3) -> list[dict]:
    """Sequential single stream, uncoordinated streams, and the pipeline."""
    cfg = cfg or PipelineConfig()
    _scheme_run(corpus, "pipeline", cfg)  # warm the compiled kernels
    rows = [measure_scheme(corpus, s, cfg, repeats) for s in ("sequential", "multistream", "pipeline")]
    base = rows[0]["tiles_per_s"]
    for r in rows:
        r["speedup"] = r["tiles_per_s"] / base
    return rows


def stage_costs(corpus: MemoryCorpus, cfg: PipelineConfig) -> dict:
    """Busy milliseconds per stage from one unthrottled sequential run."""
    rep = run_sequential(corpus.tasks(), replace(cfg, workers=1, batch_throttle=1.0, parse_throttle=1.0))
    return dict(rep.timing)


def migration_configs(throttle: float = 4.0, costs: dict | None = None) -> dict[str, dict]:
    """Throttle settings for the three load-balance regimes.

    ``slow-parser`` leaves the batch pool starved, ``balanced`` throttles
    nothing, ``slow-batch`` makes the batch pool the bottleneck.  With
    measured ``costs`` the batch throttle is scaled so that throttled
    aggregation takes ``throttle`` times as long as parsing.
    """
    batch = throttle
    if costs and costs.get("aggregate_ms", 0) > 0:
        batch = max(throttle, throttle * costs["parse_ms"] / costs["aggregate_ms"])
    return {
        "slow-parser": {"parse_throttle": throttle, "batch_throttle": 1.0},
        "balanced": {"parse_throttle": 1.0, "batch_throttle": 1.0},
        "slow-batch": {"parse_throttle": 1.0, "batch_throttle": round(batch, 2)},
    }


def fig11(
    corpus: MemoryCorpus,
    cfg: PipelineConfig | None = None,
    configs: dict[str, dict] | None = None,
    repeats: int = 3,
) -> list[dict]:
    """Pipeline throughput with migration off and on, per throttle regime."""
    cfg = cfg or PipelineConfig(buffer_capacity=4)
    _scheme_run(corpus, "pipeline", cfg)
    configs = configs or migration_configs(costs=stage_costs(corpus, cfg))
    rows = []
    for name, knobs in configs.items():
        off = replace(cfg, migration=MigrationPolicy(False), **knobs)
        on = replace(cfg, migration=MigrationPolicy(True, cfg.migration.steal_count), **knobs)
        r_off = measure_scheme(corpus, "pipeline", off, repeats)
        r_on = measure_scheme(corpus, "pipeline", on, repeats)
        rows.append({
            "config": name,
            **knobs,
            "off_tiles_per_s": r_off["tiles_per_s"],
            "on_tiles_per_s": r_on["tiles_per_s"],
            "gain": r_on["tiles_per_s"] / r_off["tiles_per_s"],
            "migration": r_on["migration"],
        })
    return rows


@dataclass(frozen=True)
class BenchSpec:
    seed: int = 0
    pairs: int = 10_000
    scales: tuple[int, ...] = (1, 2, 3, 4, 5)
    t_scale: int = 5
    tiles: int = 200
    polygons_per_tile: int = 50
    tile_scale: int = 3
    repeats: int = 3
    throttle: float = 4.0


def run_suite(name: str, spec: BenchSpec, pcfg: PipelineConfig | None = None) -> dict:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    if name in ("fig8", "fig10"):
        base = base_pairs(spec.pairs, spec.seed)
        pb = pcfg.pixelbox if pcfg else PixelBoxConfig()
        if name == "fig8":
            rows = fig8(base, spec.scales, pb, spec.repeats)
        else:
            rows = fig10(base, spec.t_scale, pb.group_size, spec.repeats)
    else:
        corpus = MemoryCorpus.generate(
            GenSpec(seed=spec.seed, tiles=spec.tiles, polygons_per_tile=spec.polygons_per_tile, scale_factor=spec.tile_scale)
        )
        if name == "table1":
            rows = table1(corpus, pcfg, spec.repeats)
        else:
            cfg = pcfg or PipelineConfig(buffer_capacity=4)
            _scheme_run(corpus, "pipeline", cfg)
            costs = stage_costs(corpus, cfg)
            rows = fig11(corpus, cfg, migration_configs(spec.throttle, costs), spec.repeats)
    return {
        "suite": name,
        "spec": asdict(spec),
        "cpu_count": os.cpu_count(),
        "rows": rows,
        "elapsed_s": time.perf_counter() - t0,
    }


def format_table(result: dict) -> str:
    rows = result["rows"]
    if not rows:
        return "(no rows)\n"
    cols = [k for k in rows[0] if not isinstance(rows[0][k], (dict, list))]

    def cell(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    body = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = [f"# {result['suite']}", "  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def to_json(result: dict) -> str:
    return json.dumps(result, indent=2, default=str) + "\n"
