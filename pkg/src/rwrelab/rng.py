"""Counter-based random streams and deterministic replicate fan-out.

Every random draw in the package comes from a stream keyed by
``(base seed, purpose tag, index...)``. Purpose tags keep environment noise
apart from driving noise, so that a quenched estimate (one environment, many
driving paths) and an annealed estimate (fresh environment per replicate)
share code paths without sharing randomness.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

ENVIRONMENT = "environment"
DRIVING = "driving"
AUXILIARY = "auxiliary"


def tag_id(tag: str) -> int:
    """Stable 32-bit integer for a purpose tag."""
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Philox generator for ``(seed, tag, *index)``.

    Streams for distinct keys are statistically independent and the mapping
    is stable across platforms and numpy versions that keep SeedSequence.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (tag_id(tag),) + tuple(int(i) for i in index)
    seq = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def derived_seed(seed: int, tag: str, *index: int) -> int:
    """63-bit integer seed derived from a stream key (for nested provenance)."""
    key = (tag_id(tag),) + tuple(int(i) for i in index)
    seq = np.random.SeedSequence(int(seed), spawn_key=key)
    return int(seq.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> 1)


def chunk_bounds(n: int, workers: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into at most ``workers`` contiguous blocks."""
    workers = max(1, min(int(workers), max(n, 1)))
    edges = np.linspace(0, n, workers + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def replicate_map(
    fn: Callable[[int], T], n: int, workers: int = 1
) -> list[T]:
    """Evaluate ``fn(i)`` for ``i in range(n)`` and return results in index order.

    ``fn`` must derive all of its randomness from ``i`` (for example through
    :func:`stream`); then the output does not depend on ``workers``. Threads
    are used because the heavy kernels are compiled with ``nogil``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]

    def run(bounds: tuple[int, int]) -> list[T]:
        return [fn(i) for i in range(*bounds)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        blocks = list(pool.map(run, chunk_bounds(n, workers)))
    return [item for block in blocks for item in block]


def replicate_array(
    fn: Callable[[int], Sequence[float] | float], n: int, workers: int = 1
) -> np.ndarray:
    """:func:`replicate_map` stacked into a float array (rows = replicates)."""
    out = replicate_map(fn, n, workers)
    if n == 0:
        return np.empty(0)
    return np.asarray(out, dtype=np.float64)
