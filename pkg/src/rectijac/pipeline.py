"""Four-stage cross-comparison pipeline and the Jaccard aggregation.

parser (multi-worker) -> builder -> filter -> aggregator (batch pool), joined
by bounded buffers, one tile task at a time.  The aggregator drains several
small tiles from its input buffer into one batch.  Every intersection count
is an exact integer and the final average is taken in canonical
(tile, p id, q id) order, so the report does not depend on worker counts,
buffer sizes, batch boundaries or migration.
"""
from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .buffers import SENTINEL, BoundedBuffer, BufferClosed
from .index import join_index_for, mbr_join
from .migration import (
    ExecutorPool,
    MigrationPolicy,
    MigrationStats,
    MigrationWorker,
    PoolKind,
    on_congestion,
    on_idleness,
    throttled_call,
)
from .parser import TILE_NAME, PolygonFile, load_polygon_file, parse_polygon_bytes, tile_key
from .pixelbox import PackedPolygons, PixelBoxConfig, intersection_areas, split_evenly

STAGES = ("parse", "build", "filter", "aggregate")


def default_workers() -> int:
    env = os.environ.get("RECTIJAC_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PipelineConfig:
    pixelbox: PixelBoxConfig = field(default_factory=PixelBoxConfig)
    workers: int = field(default_factory=default_workers)
    batch_width: int | None = None
    buffer_capacity: int = 64
    batch_min: int = 4096
    migration: MigrationPolicy = field(default_factory=MigrationPolicy)
    batch_throttle: float = 1.0
    parse_throttle: float = 1.0
    fmt: str | None = None

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if self.batch_min < 1:
            raise ValueError("batch_min must be >= 1")

    @property
    def batch_pool_width(self) -> int:
        return self.batch_width or self.workers


class PipelineError(RuntimeError):
    def __init__(self, tile_id: str | None, cause: BaseException):
        where = f"tile {tile_id}" if tile_id else "pipeline"
        super().__init__(f"{where}: {cause}")
        self.tile_id = tile_id
        self.cause = cause


@dataclass(eq=False)
class TileTask:
    tile_id: str
    seq: int
    path_a: Path | None = None
    path_b: Path | None = None
    # preloaded file contents, parsed instead of reading path_a / path_b
    raw_a: bytes | None = None
    raw_b: bytes | None = None
    file_a: PolygonFile | None = None
    file_b: PolygonFile | None = None
    tree: object = None
    packed_a: PackedPolygons | None = None
    packed_b: PackedPolygons | None = None
    pidx: np.ndarray | None = None
    qidx: np.ndarray | None = None
    size_hint: int = 0


@dataclass(frozen=True)
class TileResult:
    tile_id: str
    pairs: int
    polygons_a: int
    polygons_b: int
    missing_a: int
    missing_b: int
    # (intersection, union) of each intersecting pair, in (p id, q id) order
    ratios: tuple[tuple[int, int], ...]

    @property
    def intersecting(self) -> int:
        return len(self.ratios)

    @property
    def jaccard(self) -> float | None:
        if not self.ratios:
            return None
        return math.fsum(i / u for i, u in self.ratios) / len(self.ratios)


@dataclass
class SimilarityReport:
    image: str
    set_a: str
    set_b: str
    tiles: list[TileResult]
    params: dict
    unpaired: list[str] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    migration: dict = field(default_factory=dict)

    @property
    def pairs(self) -> int:
        return sum(t.pairs for t in self.tiles)

    @property
    def intersecting(self) -> int:
        return sum(t.intersecting for t in self.tiles)

    @property
    def jaccard(self) -> float | None:
        """Mean intersection-over-union over every intersecting pair of the image."""
        n = self.intersecting
        if n == 0:
            return None
        return math.fsum(i / u for t in self.tiles for i, u in t.ratios) / n

    def jaccard_exact(self) -> Fraction | None:
        n = self.intersecting
        if n == 0:
            return None
        return sum((Fraction(i, u) for t in self.tiles for i, u in t.ratios), Fraction(0)) / n

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "set_a": self.set_a,
            "set_b": self.set_b,
            "params": self.params,
            "tiles": [
                {
                    "tile_id": t.tile_id,
                    "pairs": t.pairs,
                    "intersecting": t.intersecting,
                    "jaccard": t.jaccard,
                    "polygons_a": t.polygons_a,
                    "polygons_b": t.polygons_b,
                    "missing_a": t.missing_a,
                    "missing_b": t.missing_b,
                }
                for t in self.tiles
            ],
            "pairs": self.pairs,
            "intersecting": self.intersecting,
            "jaccard": self.jaccard,
            "polygons_a": sum(t.polygons_a for t in self.tiles),
            "polygons_b": sum(t.polygons_b for t in self.tiles),
            "missing_a": sum(t.missing_a for t in self.tiles),
            "missing_b": sum(t.missing_b for t in self.tiles),
            "unpaired": list(self.unpaired),
            "timing": self.timing,
            "migration": self.migration,
        }

    def to_json(self, *, deterministic: bool = False) -> str:
        """JSON text; ``deterministic`` drops the run-dependent timing and
        migration counters."""
        d = self.to_dict()
        if deterministic:
            d.pop("timing")
            d.pop("migration")
        return json.dumps(d, indent=2, sort_keys=False) + "\n"


def tile_result(tile_id: str, set_a: Sequence, set_b: Sequence, pidx, qidx, inter) -> TileResult:
    """Per-tile ratios and missing-polygon counts from exact intersection counts."""
    areas_a = [p.area for p in set_a]
    areas_b = [p.area for p in set_b]
    ratios = []
    hit_a, hit_b = set(), set()
    for i, j, v in zip(pidx.tolist(), qidx.tolist(), inter.tolist()):
        if v == 0:
            continue
        ratios.append((v, areas_a[i] + areas_b[j] - v))
        hit_a.add(i)
        hit_b.add(j)
    return TileResult(
        tile_id,
        len(pidx),
        len(set_a),
        len(set_b),
        len(set_a) - len(hit_a),
        len(set_b) - len(hit_b),
        tuple(ratios),
    )


def aggregate_jaccard(tiles: Iterable[TileResult]) -> dict:
    """Image-level figures from tile results, summed in tile-id order."""
    ordered = sorted(tiles, key=lambda t: t.tile_id)
    n = sum(t.intersecting for t in ordered)
    j = None
    if n:
        j = math.fsum(i / u for t in ordered for i, u in t.ratios) / n
    return {
        "jaccard": j,
        "pairs": sum(t.pairs for t in ordered),
        "intersecting": n,
        "missing_a": sum(t.missing_a for t in ordered),
        "missing_b": sum(t.missing_b for t in ordered),
    }


def normalize_manifest(manifest: Iterable) -> list[TileTask]:
    """Accept ``(path_a, path_b)`` or ``(tile_id, path_a, path_b)`` entries."""
    tasks = []
    for seq, entry in enumerate(manifest):
        if isinstance(entry, TileTask):
            tasks.append(entry)
            continue
        if len(entry) == 2:
            pa, pb = entry
            tid = tile_key(pa)
        else:
            tid, pa, pb = entry
        tasks.append(TileTask(str(tid), seq, Path(pa), Path(pb)))
    if not tasks:
        raise ValueError("manifest is empty")
    ids = [t.tile_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest lists a tile more than once")
    return tasks


def image_name(tile_ids: Iterable[str]) -> str:
    names = set()
    for tid in tile_ids:
        m = TILE_NAME.match(tid + ".x.poly")
        names.add(m["image"] if m else tid)
    return ",".join(sorted(names))


class _Timer:
    def __init__(self):
        self._lock = threading.Lock()
        self.busy = {s: 0.0 for s in STAGES}

    def add(self, stage: str, seconds: float) -> None:
        with self._lock:
            self.busy[stage] += seconds

    def report(self, wall: float) -> dict:
        out = {f"{s}_ms": round(v * 1e3, 3) for s, v in self.busy.items()}
        out["wall_ms"] = round(wall * 1e3, 3)
        return out


class _Stages:
    """Stage bodies shared by the pipelined and sequential drivers."""

    def __init__(self, cfg: PipelineConfig, timer: _Timer):
        self.cfg = cfg
        self.timer = timer

    def parse(self, task: TileTask) -> TileTask:
        t0 = time.perf_counter()

        def load(t):
            if t.file_a is None:
                t.file_a = self._load(t.raw_a, t.path_a)
            if t.file_b is None:
                t.file_b = self._load(t.raw_b, t.path_b)
            return t

        throttled_call(load, task, self.cfg.parse_throttle)
        self.timer.add("parse", time.perf_counter() - t0)
        return task

    def _load(self, raw: bytes | None, path: Path | None) -> PolygonFile:
        if raw is None:
            return load_polygon_file(path, self.cfg.fmt)
        return parse_polygon_bytes(raw, tile_key(path) if path else "tile", self.cfg.fmt)

    def build(self, task: TileTask) -> TileTask:
        t0 = time.perf_counter()
        task.tree = join_index_for(task.file_a.polygons, task.file_b.polygons)
        self.timer.add("build", time.perf_counter() - t0)
        return task

    def filter(self, task: TileTask) -> TileTask:
        t0 = time.perf_counter()
        a, b = task.file_a.polygons, task.file_b.polygons
        pairs = mbr_join(a, b, task.tree) if task.tree is not None else []
        task.pidx = np.array([c.p_ref for c in pairs], dtype=np.int64)
        task.qidx = np.array([c.q_ref for c in pairs], dtype=np.int64)
        task.packed_a = PackedPolygons(a)
        task.packed_b = PackedPolygons(b)
        task.size_hint = len(pairs)
        task.tree = None
        self.timer.add("filter", time.perf_counter() - t0)
        return task

    def finish(self, task: TileTask, inter: np.ndarray) -> TileResult:
        return tile_result(task.tile_id, task.file_a.polygons, task.file_b.polygons, task.pidx, task.qidx, inter)

    def compute_batch(self, tasks: Sequence[TileTask], pool: ExecutorPool, pb: PixelBoxConfig) -> list[np.ndarray]:
        """Intersection counts for several tiles, spread over ``pool``."""
        t0 = time.perf_counter()
        total = sum(t.size_hint for t in tasks)
        items = []
        for ti, t in enumerate(tasks):
            if t.size_hint == 0:
                continue
            share = max(1, round(pool.width * t.size_hint / total))
            for lo, hi in split_evenly(t.size_hint, share):
                items.append((ti, lo, hi))

        def run(item):
            ti, lo, hi = item
            t = tasks[ti]
            return intersection_areas(t.packed_a, t.packed_b, t.pidx[lo:hi], t.qidx[lo:hi], pb)

        chunks = pool.run_batch(run, items) if items else []
        out = [[] for _ in tasks]
        for (ti, _, _), c in zip(items, chunks):
            out[ti].append(c)
        self.timer.add("aggregate", time.perf_counter() - t0)
        return [np.concatenate(c) if c else np.zeros(0, dtype=np.int64) for c in out]


class _Sink:
    def __init__(self, expected: int):
        self.expected = expected
        self.results: dict[str, TileResult] = {}
        self._cond = threading.Condition()
        self.error: PipelineError | None = None

    def deliver(self, r: TileResult) -> None:
        with self._cond:
            if r.tile_id in self.results:
                raise RuntimeError(f"tile {r.tile_id} delivered twice")
            self.results[r.tile_id] = r
            self._cond.notify_all()

    def fail(self, err: PipelineError) -> None:
        with self._cond:
            if self.error is None:
                self.error = err
            self._cond.notify_all()

    def wait(self) -> None:
        with self._cond:
            while len(self.results) < self.expected and self.error is None:
                self._cond.wait()


def _report(tasks, results, cfg, set_a, set_b, unpaired, timing, stats) -> SimilarityReport:
    tiles = sorted(results, key=lambda r: r.tile_id)
    pb = cfg.pixelbox
    return SimilarityReport(
        image=image_name(t.tile_id for t in tasks),
        set_a=set_a,
        set_b=set_b,
        tiles=tiles,
        params={"group_size": pb.group_size, "pixel_threshold": pb.pixel_threshold, "fanout": pb.fanout},
        unpaired=[str(u) for u in unpaired],
        timing=timing,
        migration=stats.as_dict(),
    )


def run_pipeline(
    manifest: Iterable,
    cfg: PipelineConfig | None = None,
    *,
    set_a: str = "a",
    set_b: str = "b",
    unpaired: Sequence = (),
    batch_pool: ExecutorPool | None = None,
) -> SimilarityReport:
    cfg = cfg or PipelineConfig()
    tasks = normalize_manifest(manifest)
    timer = _Timer()
    stages = _Stages(cfg, timer)
    stats = MigrationStats()
    sink = _Sink(len(tasks))
    cap = cfg.buffer_capacity
    parse_in = BoundedBuffer(cap, "parse_in")
    build_in = BoundedBuffer(cap, "build_in")
    filter_in = BoundedBuffer(cap, "filter_in")
    agg_in = BoundedBuffer(cap, "aggregate_in")
    buffers = (parse_in, build_in, filter_in, agg_in)
    own_pool = batch_pool is None
    bpool = batch_pool or ExecutorPool(PoolKind.BATCH, cfg.batch_pool_width, cfg.batch_throttle, "batch")
    spool = ExecutorPool(PoolKind.STAGE, cfg.workers, name="stage")
    remaining = [len(tasks)]
    remaining_cond = threading.Condition()
    threads: list[threading.Thread] = []

    def fail(exc: BaseException, tile_id: str | None = None) -> None:
        if isinstance(exc, BufferClosed) and sink.error is not None:
            return
        sink.fail(exc if isinstance(exc, PipelineError) else PipelineError(tile_id, exc))
        for b in buffers:
            b.close()

    def guarded(fn):
        def body():
            try:
                fn()
            except BufferClosed:
                pass
            except BaseException as exc:
                fail(exc, getattr(exc, "tile_id", None))
        return body

    def parsed(task: TileTask) -> None:
        build_in.put(task)
        with remaining_cond:
            remaining[0] -= 1
            remaining_cond.notify_all()

    def run_parse(task: TileTask) -> None:
        try:
            stages.parse(task)
        except Exception as exc:
            raise PipelineError(task.tile_id, exc) from exc

    def feeder():
        for t in tasks:
            parse_in.put(t)
        for _ in range(cfg.workers):
            parse_in.put(SENTINEL)

    def parser_worker():
        while True:
            t = parse_in.get()
            if t is SENTINEL:
                return
            run_parse(t)
            stats.count("parse", "stage")
            parsed(t)

    def parser_closer():
        with remaining_cond:
            while remaining[0] > 0 and sink.error is None:
                remaining_cond.wait(0.1)
        if sink.error is None:
            build_in.put(SENTINEL)

    def builder():
        while True:
            t = build_in.get()
            if t is SENTINEL:
                filter_in.put(SENTINEL)
                return
            try:
                stages.build(t)
            except Exception as exc:
                raise PipelineError(t.tile_id, exc) from exc
            filter_in.put(t)

    def filterer():
        while True:
            t = filter_in.get()
            if t is SENTINEL:
                agg_in.put(SENTINEL)
                return
            try:
                stages.filter(t)
            except Exception as exc:
                raise PipelineError(t.tile_id, exc) from exc
            agg_in.put(t)

    def aggregator():
        done = False
        while not done:
            first = agg_in.get()
            if first is SENTINEL:
                return
            batch = [first]
            total = first.size_hint
            while total < cfg.batch_min:
                nxt = agg_in.try_get()
                if nxt is None:
                    break
                if nxt is SENTINEL:
                    done = True
                    break
                batch.append(nxt)
                total += nxt.size_hint
            try:
                counts = stages.compute_batch(batch, bpool, cfg.pixelbox)
            except Exception as exc:
                raise PipelineError(batch[0].tile_id if len(batch) == 1 else None, exc) from exc
            for t, c in zip(batch, counts):
                sink.deliver(stages.finish(t, c))
                stats.count("aggregate", "batch")

    def scalar_execute(task: TileTask) -> None:
        scalar_cfg = cfg.pixelbox.scalar()
        t0 = time.perf_counter()
        futures = [
            spool.submit(intersection_areas, task.packed_a, task.packed_b, task.pidx[lo:hi], task.qidx[lo:hi], scalar_cfg)
            for lo, hi in split_evenly(task.size_hint, spool.width)
        ] if task.size_hint else []
        parts = [f.result() for f in futures]
        timer.add("aggregate", time.perf_counter() - t0)
        inter = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        sink.deliver(stages.finish(task, inter))
        stats.count("aggregate", "stage")

    def batch_parse_execute(task: TileTask) -> None:
        bpool.run_batch(run_parse, [task], throttled=False)
        stats.count("parse", "batch")
        parsed(task)

    migrators: list[MigrationWorker] = []
    if cfg.migration.enabled:
        congestion = MigrationWorker(
            "migrate-congestion",
            lambda: on_congestion(agg_in, cfg.migration, scalar_execute, stats),
            lambda e: fail(e),
        )
        idleness = MigrationWorker(
            "migrate-idleness",
            lambda: on_idleness(agg_in, parse_in, bpool, cfg.migration, batch_parse_execute, stats),
            lambda e: fail(e),
        )
        agg_in.subscribe(on_full=congestion.wake, on_empty=idleness.wake)
        migrators = [congestion, idleness]

    bodies = [("feeder", feeder)]
    bodies += [(f"parser-{i}", parser_worker) for i in range(cfg.workers)]
    bodies += [("parser-closer", parser_closer), ("builder", builder), ("filter", filterer), ("aggregator", aggregator)]
    t0 = time.perf_counter()
    for name, fn in bodies:
        th = threading.Thread(target=guarded(fn), name=name, daemon=True)
        threads.append(th)
    for m in migrators:
        m.start()
    for th in threads:
        th.start()
    try:
        sink.wait()
    finally:
        wall = time.perf_counter() - t0
        for m in migrators:
            m.stop()
        if sink.error is not None:
            for b in buffers:
                b.close()
        for th in threads:
            th.join()
        for m in migrators:
            m.join()
        spool.shutdown()
        if own_pool:
            bpool.shutdown()
    if sink.error is not None:
        raise sink.error
    return _report(tasks, sink.results.values(), cfg, set_a, set_b, unpaired, timer.report(wall), stats)


def _run_stream(tasks, stages: _Stages, bpool: ExecutorPool, cfg: PipelineConfig, stats: MigrationStats) -> list[TileResult]:
    out = []
    for t in tasks:
        try:
            stages.parse(t)
            stats.count("parse", "stage")
            stages.build(t)
            stages.filter(t)
            (inter,) = stages.compute_batch([t], bpool, cfg.pixelbox)
        except Exception as exc:
            raise PipelineError(t.tile_id, exc) from exc
        out.append(stages.finish(t, inter))
        stats.count("aggregate", "batch")
    return out


def run_sequential(
    manifest: Iterable,
    cfg: PipelineConfig | None = None,
    *,
    set_a: str = "a",
    set_b: str = "b",
    unpaired: Sequence = (),
) -> SimilarityReport:
    """All four stages on one tile at a time, in manifest order."""
    cfg = cfg or PipelineConfig()
    tasks = normalize_manifest(manifest)
    timer = _Timer()
    stats = MigrationStats()
    t0 = time.perf_counter()
    with ExecutorPool(PoolKind.BATCH, cfg.batch_pool_width, cfg.batch_throttle, "batch") as bpool:
        results = _run_stream(tasks, _Stages(cfg, timer), bpool, cfg, stats)
    return _report(tasks, results, cfg, set_a, set_b, unpaired, timer.report(time.perf_counter() - t0), stats)


def run_multistream(
    manifest: Iterable,
    cfg: PipelineConfig | None = None,
    streams: int | None = None,
    *,
    set_a: str = "a",
    set_b: str = "b",
) -> SimilarityReport:
    """Independent sequential streams over interleaved slices of the manifest,
    each submitting its own tiles to the shared batch pool uncoordinated."""
    cfg = cfg or PipelineConfig()
    tasks = normalize_manifest(manifest)
    streams = streams or cfg.workers
    timer = _Timer()
    stats = MigrationStats()
    stages = _Stages(cfg, timer)
    results: list[TileResult] = []
    errors: list[BaseException] = []
    lock = threading.Lock()
    t0 = time.perf_counter()
    with ExecutorPool(PoolKind.BATCH, cfg.batch_pool_width, cfg.batch_throttle, "batch") as bpool:

        def stream(part):
            try:
                r = _run_stream(part, stages, bpool, cfg, stats)
                with lock:
                    results.extend(r)
            except BaseException as exc:
                with lock:
                    errors.append(exc)

        threads = [threading.Thread(target=stream, args=(tasks[i::streams],)) for i in range(streams)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    if errors:
        raise errors[0]
    return _report(tasks, results, cfg, set_a, set_b, (), timer.report(time.perf_counter() - t0), stats)
