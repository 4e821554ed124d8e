"""Executor pools and the two dormant migration workers.

The batch pool stands in for a wide data-parallel device; the stage pool is
the ordinary scalar workers.  When the aggregator's input buffer fills, the
congestion worker takes the smallest queued tile tasks and runs them on the
stage pool with the quadtree-fan-out engine.  When that buffer drains and the
batch pool has a free worker, the idleness worker pulls pending parse tasks
onto the batch pool.
"""
from __future__ import annotations

import enum
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .buffers import BoundedBuffer


class PoolKind(str, enum.Enum):
    STAGE = "stage"
    BATCH = "batch"


def throttled_call(fn: Callable, arg: Any, factor: float) -> Any:
    """Run ``fn(arg)``, then idle for ``factor - 1`` times its CPU time.

    The idle time models a slower device without consuming host CPU.
    """
    if factor <= 1.0:
        return fn(arg)
    t0 = time.thread_time()
    out = fn(arg)
    time.sleep((factor - 1.0) * (time.thread_time() - t0))
    return out


class ExecutorPool:
    def __init__(self, kind: PoolKind | str, width: int = 1, throttle: float = 1.0, name: str | None = None):
        if width < 1:
            raise ValueError("width must be >= 1")
        if throttle < 1.0:
            raise ValueError("throttle is a slowdown factor >= 1")
        self.kind = PoolKind(kind)
        self.width = width
        self.throttle = throttle
        self.name = name or self.kind.value
        self._executor = ThreadPoolExecutor(width, thread_name_prefix=self.name)
        self._lock = threading.Lock()
        self._active = 0
        self.items_run = 0

    @property
    def active(self) -> int:
        return self._active

    @property
    def idle(self) -> bool:
        return self._active < self.width

    def _wrap(self, fn: Callable, throttled: bool) -> Callable:
        factor = self.throttle if throttled else 1.0

        def run(arg):
            with self._lock:
                self._active += 1
            try:
                return throttled_call(fn, arg, factor)
            finally:
                with self._lock:
                    self._active -= 1
                    self.items_run += 1

        return run

    def run_batch(self, fn: Callable, items: Sequence, *, throttled: bool = True) -> list:
        """Apply ``fn`` to every item on the pool's workers; results in input order.

        ``throttled=False`` exempts work the throttle does not model (parsing).
        """
        run = self._wrap(fn, throttled)
        futures = [self._executor.submit(run, it) for it in items]
        return [f.result() for f in futures]

    def submit(self, fn: Callable, *args) -> Future:
        if self.kind is PoolKind.BATCH:
            raise TypeError("the batch pool only accepts batch work (use run_batch)")
        run = self._wrap(lambda a: fn(*a), False)
        return self._executor.submit(run, args)

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


@dataclass(frozen=True)
class MigrationPolicy:
    enabled: bool = False
    steal_count: int = 1

    def __post_init__(self):
        if self.steal_count < 1:
            raise ValueError("steal_count must be >= 1")


@dataclass
class MigrationStats:
    congestion_steals: int = 0
    idleness_steals: int = 0
    tasks_by_pool: dict = field(
        default_factory=lambda: {"parse": {"stage": 0, "batch": 0}, "aggregate": {"stage": 0, "batch": 0}}
    )
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def count(self, stage: str, pool: str, n: int = 1) -> None:
        with self._lock:
            self.tasks_by_pool[stage][pool] += n

    def record_steal(self, kind: str) -> None:
        with self._lock:
            if kind == "congestion":
                self.congestion_steals += 1
            else:
                self.idleness_steals += 1

    def as_dict(self) -> dict:
        with self._lock:
            return {
                "congestion_steals": self.congestion_steals,
                "idleness_steals": self.idleness_steals,
                "tasks_by_pool": {k: dict(v) for k, v in self.tasks_by_pool.items()},
            }


def on_congestion(buffer: BoundedBuffer, policy: MigrationPolicy, execute: Callable[[Any], None], stats: MigrationStats) -> int:
    """Steal the smallest tasks from a full aggregator buffer and run them.

    ``execute`` must run a task on the stage pool and deliver its results.
    Returns the number of tasks stolen.
    """
    if not buffer.is_full():
        return 0
    tasks = buffer.take_smallest(policy.steal_count, key=lambda t: t.size_hint)
    for t in tasks:
        stats.record_steal("congestion")
        execute(t)
    return len(tasks)


def on_idleness(
    trigger: BoundedBuffer,
    source: BoundedBuffer,
    batch_pool: ExecutorPool,
    policy: MigrationPolicy,
    execute: Callable[[Any], None],
    stats: MigrationStats,
) -> int:
    """Move pending parse tasks to the batch pool while the aggregator starves.

    ``execute`` must run a parse task on the batch pool and forward its
    output to the builder.  Returns the number of tasks moved.
    """
    if not trigger.is_empty() or not batch_pool.idle:
        return 0
    tasks = source.take_oldest(policy.steal_count)
    for t in tasks:
        stats.record_steal("idleness")
        execute(t)
    return len(tasks)


class MigrationWorker(threading.Thread):
    """Sleeps until woken by a buffer transition, then repeats ``step``
    while it keeps making progress."""

    def __init__(self, name: str, step: Callable[[], int], on_error: Callable[[BaseException], None]):
        super().__init__(name=name, daemon=True)
        self._step = step
        self._wake = threading.Event()
        self._halt = threading.Event()
        self._on_error = on_error

    def wake(self) -> None:
        self._wake.set()

    def stop(self) -> None:
        self._halt.set()
        self._wake.set()

    def run(self) -> None:
        try:
            while True:
                self._wake.wait()
                self._wake.clear()
                if self._halt.is_set():
                    return
                while not self._halt.is_set() and self._step() > 0:
                    pass
        except BaseException as exc:
            self._on_error(exc)
