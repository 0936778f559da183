"""Ordered shard execution over an optional process pool."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigError

WORKERS_ENV = "REBIRTHLAB_WORKERS"

__all__ = ["resolve_workers", "shard_sizes", "run_shards", "WORKERS_ENV"]


def resolve_workers(workers: int | None = None) -> int:
    """Explicit value, else ``$REBIRTHLAB_WORKERS``, else 1."""
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "").strip()
        if not raw:
            return 1
        try:
            workers = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigError("worker count must be at least 1")
    return int(workers)


def shard_sizes(n: int, shard_size: int) -> list[tuple[int, int]]:
    """``(first_index, size)`` of consecutive shards covering ``range(n)``."""
    if shard_size < 1:
        raise ConfigError("shard_size must be positive")
    return [(lo, min(shard_size, n - lo)) for lo in range(0, n, shard_size)]


def run_shards(fn, tasks, workers: int | None = None) -> list:
    """``[fn(*t) for t in tasks]``, possibly in worker processes.

    Results come back in task order, so any reduction over them is
    independent of the worker count.
    """
    tasks = list(tasks)
    w = min(resolve_workers(workers), max(len(tasks), 1))
    if w <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, *zip(*tasks)))
