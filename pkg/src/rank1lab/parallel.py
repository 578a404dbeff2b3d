"""Thread-pool helper honouring the ``RANK1LAB_THREADS`` cap."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def max_threads() -> int:
    env = os.environ.get("RANK1LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def parallel_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]`` evaluated on a thread pool; output order follows input order."""
    items = list(items)
    n = max_threads() if threads is None else max(1, threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
