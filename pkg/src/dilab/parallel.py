"""Process-pool map with a worker cap taken from the environment."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "DILAB_WORKERS"


def worker_count(requested: int | None = None) -> int:
    """``requested`` (or the CPU count), capped by ``$DILAB_WORKERS`` when set."""
    n = requested or os.cpu_count() or 1
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        n = min(n, int(raw))
    return max(1, n)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, in input order, optionally across processes.

    Each task carries its own seed, so results do not depend on scheduling.
    """
    items = list(items)
    n = min(worker_count(workers), len(items)) if items else 1
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
