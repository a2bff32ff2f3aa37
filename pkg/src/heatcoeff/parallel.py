"""Ordered thread-pool map over independent k values.

The marching kernel releases the GIL, so threads give real speed-up.
``HEATCOEFF_THREADS`` caps the pool; results keep input order, so
outputs do not depend on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("HEATCOEFF_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, min(n, os.cpu_count() or 1))


def pmap(func, items) -> list:
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
