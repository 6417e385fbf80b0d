"""
Reproducible random streams and an order-preserving parallel map.

Every replication draws from its own counter-based stream keyed by
(master seed, stream kind, index), so results never depend on how work is
spread over workers.
"""
import logging
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

from epsistools.errors import DomainError

logger = logging.getLogger(__name__)

SINGLE_STREAM = 0
ENSEMBLE_STREAM = 1
COUPLED_STREAM = 2

# replications per vectorised chunk; part of the reproducibility contract
CHUNK_SIZE = 1024

T = TypeVar("T")
R = TypeVar("R")


def replication_seed(master_seed: int, index: int, stream: int = SINGLE_STREAM):
    """
    Seed sequence of one replication.

    Parameters
    ----------
    master_seed : int
        64-bit master seed of the run.
    index : int
        Replication (or chunk) index.
    stream : int
        Stream kind, one of SINGLE_STREAM, ENSEMBLE_STREAM, COUPLED_STREAM.

    Returns
    -------
    numpy.random.SeedSequence
        Independent seed sequence for (master_seed, stream, index).
    """
    if not 0 <= int(master_seed) < 2**64:
        raise DomainError(f"master_seed must lie in [0, 2^64), got {master_seed}")
    if index < 0:
        raise DomainError(f"index must be non-negative, got {index}")
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(index)))


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an int or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def chunk_bounds(replications: int) -> list[tuple[int, int, int]]:
    """(chunk index, first replication, stop) triples covering all replications."""
    return [
        (index, start, min(start + CHUNK_SIZE, replications))
        for index, start in enumerate(range(0, replications, CHUNK_SIZE))
    ]


def ordered_map(
    fn: Callable[[T], R], items: Iterable[T], workers: int = 1, kind: str = "process"
) -> list[R]:
    """
    Map `fn` over `items`, returning results in input order.

    Parameters
    ----------
    fn : Callable
        Module-level function (must be picklable for process pools).
    items : Iterable
        Work items.
    workers : int
        Worker count; 1 runs inline.
    kind : str
        "process" for CPU-bound Python loops, "thread" for numpy-heavy work.

    Returns
    -------
    list
        `fn(item)` for every item, in the order of `items`.
    """
    items = list(items)
    if workers < 1:
        raise DomainError(f"workers must be at least 1, got {workers}")
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    executor_cls = ProcessPoolExecutor if kind == "process" else ThreadPoolExecutor
    logger.debug("mapping %d items over %d %s workers", len(items), workers, kind)
    with executor_cls(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(fn, items))
