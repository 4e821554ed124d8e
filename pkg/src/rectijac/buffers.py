"""Blocking bounded FIFO with observable occupancy and full/empty hooks."""
from __future__ import annotations

import threading
from collections import deque
from typing import Any, Callable, Iterable


class BufferClosed(RuntimeError):
    pass


# Marks the end of a stage's output; forwarded downstream, never stolen.
SENTINEL = object()


class BoundedBuffer:
    def __init__(self, capacity: int = 64, name: str = "buffer"):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.name = name
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._on_full: list[Callable[[], None]] = []
        self._on_empty: list[Callable[[], None]] = []
        self.high_water = 0

    def subscribe(self, on_full: Callable[[], None] | None = None, on_empty: Callable[[], None] | None = None) -> None:
        """Register callbacks fired on transitions into the full or empty state.

        Callbacks run with the buffer lock held and must not block.
        """
        if on_full:
            self._on_full.append(on_full)
        if on_empty:
            self._on_empty.append(on_empty)

    @property
    def occupancy(self) -> int:
        return len(self._items)

    def is_full(self) -> bool:
        return len(self._items) >= self.capacity

    def is_empty(self) -> bool:
        return not self._items

    def put(self, item: Any) -> None:
        with self._cond:
            while len(self._items) >= self.capacity and not self._closed:
                self._cond.wait()
            if self._closed:
                raise BufferClosed(self.name)
            self._items.append(item)
            self.high_water = max(self.high_water, len(self._items))
            self._cond.notify_all()
            if len(self._items) == self.capacity:
                for cb in self._on_full:
                    cb()

    def get(self) -> Any:
        with self._cond:
            while not self._items and not self._closed:
                self._cond.wait()
            if self._closed:
                raise BufferClosed(self.name)
            return self._pop_at(0)

    def try_get(self) -> Any | None:
        with self._cond:
            if self._closed:
                raise BufferClosed(self.name)
            if not self._items:
                return None
            return self._pop_at(0)

    def take(self, count: int, select: Callable[[list], Iterable[int]]) -> list:
        """Remove up to ``count`` items chosen by ``select`` without blocking.

        ``select`` receives a snapshot of the queued items (sentinels excluded
        as ``None``) and returns positions in preference order.
        """
        with self._cond:
            if self._closed:
                return []
            view = [None if it is SENTINEL else it for it in self._items]
            chosen = []
            for pos in select(view):
                if len(chosen) >= count:
                    break
                if view[pos] is not None and pos not in chosen:
                    chosen.append(pos)
            if not chosen:
                return []
            out = [self._items[p] for p in chosen]
            keep = set(chosen)
            self._items = deque(it for i, it in enumerate(self._items) if i not in keep)
            self._after_removal()
            return out

    def take_smallest(self, count: int, key: Callable[[Any], int]) -> list:
        return self.take(count, lambda view: sorted((i for i, v in enumerate(view) if v is not None), key=lambda i: (key(view[i]), i)))

    def take_oldest(self, count: int) -> list:
        return self.take(count, lambda view: [i for i, v in enumerate(view) if v is not None])

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def _pop_at(self, pos: int) -> Any:
        item = self._items[pos]
        del self._items[pos]
        self._after_removal()
        return item

    def _after_removal(self) -> None:
        self._cond.notify_all()
        if not self._items:
            for cb in self._on_empty:
                cb()
