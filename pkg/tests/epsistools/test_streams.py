import numpy as np
import pytest

from epsistools.errors import DomainError
from epsistools.streams import (
    CHUNK_SIZE,
    COUPLED_STREAM,
    ENSEMBLE_STREAM,
    chunk_bounds,
    make_rng,
    ordered_map,
    replication_seed,
)


def _square(x):
    return x * x


def test_seeds_are_reproducible_and_distinct():
    first = make_rng(replication_seed(42, 3)).random(5)
    again = make_rng(replication_seed(42, 3)).random(5)
    other_index = make_rng(replication_seed(42, 4)).random(5)
    other_stream = make_rng(replication_seed(42, 3, ENSEMBLE_STREAM)).random(5)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other_index)
    assert not np.array_equal(first, other_stream)
    assert replication_seed(42, 3, COUPLED_STREAM).spawn_key == (COUPLED_STREAM, 3)


def test_make_rng_accepts_generators_and_ints():
    rng = make_rng(7)
    assert make_rng(rng) is rng
    assert isinstance(rng.bit_generator, np.random.Philox)


@pytest.mark.parametrize("master_seed, index", [(-1, 0), (2**64, 0), (1, -1)])
def test_seed_domain(master_seed, index):
    with pytest.raises(DomainError):
        replication_seed(master_seed, index)


def test_chunk_bounds_cover_replications():
    bounds = chunk_bounds(2 * CHUNK_SIZE + 5)
    assert bounds == [
        (0, 0, CHUNK_SIZE),
        (1, CHUNK_SIZE, 2 * CHUNK_SIZE),
        (2, 2 * CHUNK_SIZE, 2 * CHUNK_SIZE + 5),
    ]
    assert chunk_bounds(0) == []


@pytest.mark.parametrize("kind", ["process", "thread"])
def test_ordered_map_keeps_order(kind):
    assert ordered_map(_square, range(10), workers=3, kind=kind) == [x * x for x in range(10)]


def test_ordered_map_needs_a_worker():
    with pytest.raises(DomainError):
        ordered_map(_square, [1, 2], workers=0)
