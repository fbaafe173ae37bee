"""A single process-wide thread budget shared by slab- and block-level work.

Work submitted from inside a worker runs serially, so nesting never
oversubscribes the budget.  Results are always returned in submission
order, which keeps every reduction deterministic.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "PARASPLIT_THREADS"

_local = threading.local()
_lock = threading.Lock()
_pools: dict[int, ThreadPoolExecutor] = {}


def _env_budget() -> int:
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


_budget = _env_budget()


def thread_budget() -> int:
    return _budget


def set_thread_budget(n: int) -> None:
    global _budget
    if int(n) != n or n < 1:
        raise ValueError(f"thread budget must be a positive integer, got {n}")
    _budget = int(n)


@contextmanager
def budget(n: int | None):
    """Temporarily change the budget (``None`` leaves it alone)."""
    if n is None:
        yield
        return
    old = _budget
    set_thread_budget(n)
    try:
        yield
    finally:
        set_thread_budget(old)


def in_worker() -> bool:
    return getattr(_local, "active", False)


def _pool(n: int) -> ThreadPoolExecutor:
    with _lock:
        pool = _pools.get(n)
        if pool is None:
            pool = _pools[n] = ThreadPoolExecutor(max_workers=n, thread_name_prefix="parasplit")
        return pool


def _run_marked(fn, item):
    _local.active = True
    try:
        return fn(item)
    finally:
        _local.active = False


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, spread over up to ``threads`` workers."""
    items = list(items)
    n = min(threads or _budget, len(items))
    if n <= 1 or in_worker():
        return [fn(x) for x in items]
    futures = [_pool(n).submit(_run_marked, fn, x) for x in items]
    return [f.result() for f in futures]


def chunks(total: int, parts: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into at most ``parts`` contiguous pieces."""
    parts = max(1, min(parts, total))
    edges = [total * k // parts for k in range(parts + 1)]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
