"""Order-preserving thread pool helper for independent per-scene work."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV_VAR = "SPECTRAL_FORGE_THREADS"


def resolve_threads(flag_value: int | None = None) -> int:
    """Thread count: explicit flag, else env override, else available cores."""
    if flag_value is not None and flag_value > 0:
        return flag_value
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def thread_map(fn: Callable[[T], R], items: Sequence[T] | Iterable[T],
               threads: int = 1) -> list[R]:
    """map() across a thread pool; results keep input order, so the outcome
    is independent of the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
