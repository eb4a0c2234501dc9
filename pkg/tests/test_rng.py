import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrelab import rng


@given(st.integers(0, 2**32), st.integers(0, 1000))
def test_stream_is_deterministic(seed, i):
    a = rng.stream(seed, rng.DRIVING, i).standard_normal(8)
    b = rng.stream(seed, rng.DRIVING, i).standard_normal(8)
    assert np.array_equal(a, b)


def test_tags_and_indices_separate_streams():
    a = rng.stream(1, rng.DRIVING, 0).standard_normal(8)
    assert not np.array_equal(a, rng.stream(1, rng.ENVIRONMENT, 0).standard_normal(8))
    assert not np.array_equal(a, rng.stream(1, rng.DRIVING, 1).standard_normal(8))


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        rng.stream(-1, rng.DRIVING)


@given(st.integers(0, 500), st.integers(1, 40))
def test_chunks_cover_range_in_order(n, workers):
    bounds = rng.chunk_bounds(n, workers)
    flat = [i for a, b in bounds for i in range(a, b)]
    assert flat == list(range(n))


@pytest.mark.parametrize("workers", [1, 3, 16])
def test_replicate_map_order_independent_of_workers(workers):
    def fn(i):
        return float(rng.stream(9, "t", i).random())

    ref = rng.replicate_array(fn, 37, 1)
    assert np.array_equal(rng.replicate_array(fn, 37, workers), ref)
