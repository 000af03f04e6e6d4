"""Seeded replica execution whose results do not depend on the worker count.

Every replica owns a generator derived from ``(master seed, stream, replica id)``.
Replicas are grouped into fixed-size chunks, so the arrays each chunk works on
are the same for any number of workers, and results are gathered in replica
order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

DEFAULT_CHUNK = 25


def default_workers() -> int:
    return os.cpu_count() or 1


def replica_rng(seed: int, replica: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, replica)))


def map_replicas(
    fn: Callable[[Sequence[int], list[np.random.Generator]], Sequence],
    n: int,
    seed: int,
    workers: int = 1,
    stream: int = 0,
    chunk: int = DEFAULT_CHUNK,
) -> list:
    """Run ``fn(ids, rngs)`` over chunks of replica ids and flatten the results.

    ``fn`` returns one result per id in the chunk.
    """
    chunks = [list(range(i, min(i + chunk, n))) for i in range(0, n, chunk)]

    def job(ids):
        out = fn(ids, [replica_rng(seed, i, stream) for i in ids])
        if len(out) != len(ids):
            raise RuntimeError("replica function returned the wrong number of results")
        return out

    if workers <= 1 or len(chunks) <= 1:
        results = [job(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, chunks))
    return [r for part in results for r in part]
