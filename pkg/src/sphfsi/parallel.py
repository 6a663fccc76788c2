"""Deterministic worker pool for elementwise array work.

Workers split an index range into contiguous chunks and write results into
disjoint slices of preallocated outputs.  Because every element is computed
independently and reductions stay serial, results are bit-identical for any
worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def available_workers() -> int:
    return max(1, os.cpu_count() or 1)


class WorkerPool:
    def __init__(self, workers: int | None = None):
        self.workers = int(workers) if workers else available_workers()
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        self._pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None

    def map_chunks(self, fn, n: int) -> None:
        """Call fn(lo, hi) over a contiguous partition of range(n)."""
        if n <= 0:
            return
        if self._pool is None or n < 4 * self.workers:
            fn(0, n)
            return
        step = (n + self.workers - 1) // self.workers
        bounds = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
        futures = [self._pool.submit(fn, lo, hi) for lo, hi in bounds]
        for f in futures:
            f.result()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
