"""Worker pool for block tasks.

Tasks are pure functions of (immutable payload, small task args) and results
are reduced by the caller in a fixed order, so any execution backend yields
identical output. With one worker everything runs inline; with more, a pool
of forked processes inherits the payload (dataset + plan) at creation time,
which avoids pickling the data matrix, and only the small per-task argument
tuples and result arrays cross process boundaries.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["BlockPool", "get_payload", "default_workers"]

_PAYLOAD = None


def _set_payload(payload):
    global _PAYLOAD
    _PAYLOAD = payload


def get_payload():
    return _PAYLOAD


def _limit_blas_threads():
    # each forked worker gets one BLAS thread, otherwise workers oversubscribe
    # the cores and run slower than the serial path
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


def default_workers() -> int:
    env = os.environ.get("PFBP_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


class BlockPool:
    """Runs a task function over argument tuples, preserving input order."""

    def __init__(self, workers: int = 1, payload=None):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        _set_payload(payload)
        self._executor = None
        if workers > 1:
            ctx = multiprocessing.get_context("fork")
            self._executor = ProcessPoolExecutor(
                max_workers=workers, mp_context=ctx,
                initializer=_limit_blas_threads,
            )

    def run(self, func, tasks):
        tasks = list(tasks)
        if self._executor is None:
            return [func(t) for t in tasks]
        chunk = max(1, len(tasks) // (4 * self.workers))
        return list(self._executor.map(func, tasks, chunksize=chunk))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        _set_payload(None)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
