"""Chunked, order-preserving mapping of fiberwise kernels over sample points."""
from multiprocessing.pool import ThreadPool
from typing import Callable, Sequence

import numpy as np

# Points per chunk; numpy's LAPACK loops release the GIL inside a chunk.
CHUNK_SIZE = 65536

_threads = 1


def set_threads(threads: int) -> None:
    global _threads
    _threads = max(1, int(threads))


def get_threads() -> int:
    return _threads


def fiber_map(func: Callable[..., np.ndarray], arrays: Sequence[np.ndarray],
              threads: int = None) -> np.ndarray:
    """Apply ``func`` to contiguous chunks of the leading axis and concatenate.

    Chunks are reassembled in point order, so the result never depends on the
    number of threads.
    """
    threads = threads or _threads
    n = len(arrays[0])
    if threads == 1 or n <= CHUNK_SIZE:
        return func(*arrays)
    bounds = [(start, min(start + CHUNK_SIZE, n)) for start in range(0, n, CHUNK_SIZE)]
    with ThreadPool(threads) as pool:
        parts = pool.map(lambda b: func(*(a[b[0]:b[1]] for a in arrays)), bounds)
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)
