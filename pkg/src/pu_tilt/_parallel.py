"""Order-preserving map over worker processes."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def derive_seed(*keys) -> int:
    """Stable 32-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def resolve_threads(threads=None) -> int:
    """Worker count: explicit value, else PU_TILT_THREADS, else 1; 0 means all cores."""
    if threads is None:
        threads = int(os.environ.get("PU_TILT_THREADS", "1"))
    threads = int(threads)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def _limit_blas():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(1)


def parallel_map(fn, items, threads=1):
    """``list(map(fn, items))``, run on ``threads`` processes when > 1."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads, initializer=_limit_blas) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))
