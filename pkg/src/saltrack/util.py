"""Small shared helpers: bounded thread pool and the SALTRK_THREADS knob."""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker count from SALTRK_THREADS (0 = auto, unset/1 = serial)."""
    raw = os.environ.get("SALTRK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def thread_map(fn, items):
    """Ordered map over items, parallel when SALTRK_THREADS allows it."""
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
