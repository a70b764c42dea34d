"""Worker-count resolution and an order-preserving process map."""

from __future__ import annotations

import multiprocessing as mp
import os
import warnings
from concurrent.futures import ProcessPoolExecutor

ENV_VAR = "GENEFUSE_THREADS"


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def resolve_workers(requested: int | None = None) -> int:
    """Explicit request, else ``$GENEFUSE_THREADS``, else 1."""
    if requested is None:
        env = os.environ.get(ENV_VAR)
        requested = int(env) if env else 1
    if requested < 1:
        raise ValueError(f"worker count must be >= 1, got {requested}")
    cores = available_cores()
    if requested > cores:
        warnings.warn(f"{requested} workers requested but only {cores} cores available",
                      RuntimeWarning, stacklevel=2)
    return requested


def _context():
    methods = mp.get_all_start_methods()
    return mp.get_context("fork" if "fork" in methods else "spawn")


def pmap(func, items, workers: int = 1) -> list:
    """``list(map(func, items))`` across ``workers`` processes, results in input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=_context()) as ex:
        return list(ex.map(func, items))


class WorkerPool:
    """Long-lived pool for repeated batches; falls back to in-process map for one worker."""

    def __init__(self, workers: int = 1, initializer=None, initargs=()):
        self.workers = workers
        self._ex = None
        if workers > 1:
            self._ex = ProcessPoolExecutor(max_workers=workers, mp_context=_context(),
                                           initializer=initializer, initargs=initargs)
        elif initializer is not None:
            initializer(*initargs)

    def map(self, func, items, chunksize: int = 1) -> list:
        items = list(items)
        if self._ex is None:
            return [func(x) for x in items]
        return list(self._ex.map(func, items, chunksize=chunksize))

    def close(self):
        if self._ex is not None:
            self._ex.shutdown()
            self._ex = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
