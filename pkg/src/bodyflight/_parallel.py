"""Ordered map over independent runs, optionally in worker processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers():
    env = os.environ.get("BODYFLIGHT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def ordered_map(fn, items, workers=None):
    """``[fn(x) for x in items]``; results keep input order whatever the worker count."""
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
