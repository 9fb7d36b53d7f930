"""Small runtime helpers: deterministic parallel batches."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def batch_width() -> int:
    """Parallel batch width, capped by the FRACFLOW_THREADS environment variable."""
    cap = os.environ.get("FRACFLOW_THREADS", "")
    try:
        n = int(cap)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return max(1, n)


def batch_map(fn, items):
    """Map ``fn`` over items, possibly in parallel; results merged in index order."""
    items = list(items)
    width = batch_width()
    if width == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=width) as pool:
        return list(pool.map(fn, items))
