"""Worker-count control and order-preserving task mapping.

INTERACTION_LAB_THREADS caps the number of worker threads library-wide
(0 or unset = auto). Tasks carry their own derived seeds and results are
reduced in task-index order, so the output is identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get("INTERACTION_LAB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """map() preserving input order, threaded when the cap allows it."""
    workers = min(worker_count(), len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
