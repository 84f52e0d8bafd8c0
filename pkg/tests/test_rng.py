import numpy as np
from hypothesis import given, strategies as st

from shiftlab.rng import CounterRng


def test_deterministic_for_fixed_key():
    a = [CounterRng(9, "s", 1).next_u64() for _ in range(5)]
    b = [CounterRng(9, "s", 1).next_u64() for _ in range(5)]
    assert a == b


def test_streams_are_independent():
    a = CounterRng(9, "s", 1).next_u64()
    b = CounterRng(9, "s", 2).next_u64()
    c = CounterRng(10, "s", 1).next_u64()
    assert len({a, b, c}) == 3


def test_vectorized_matches_scalar():
    scalar = CounterRng(3, "v")
    vals = [scalar.uniform(-2.0, 3.0) for _ in range(64)]
    arr = CounterRng(3, "v").uniform_array((64,), -2.0, 3.0)
    assert np.array_equal(np.array(vals), arr)


def test_array_draw_advances_counter():
    r = CounterRng(3, "v")
    first = r.uniform_array((4,), 0, 1)
    after = r.uniform(0, 1)
    direct = CounterRng(3, "v")
    expect = [direct.uniform(0, 1) for _ in range(5)]
    assert np.array_equal(first, expect[:4])
    assert after == expect[4]


@given(st.integers(0, 2**32), st.integers(1, 200))
def test_permutation_is_bijective(seed, n):
    perm = CounterRng(seed, "perm").permutation(n)
    assert sorted(perm) == list(range(n))


@given(st.integers(0, 2**32))
def test_floats_in_unit_interval(seed):
    r = CounterRng(seed)
    for _ in range(20):
        f = r.next_float()
        assert 0.0 <= f < 1.0


def test_sample_is_sorted_subset():
    r = CounterRng(1, "sample")
    pop = list(range(40))
    got = r.sample(pop, 10)
    assert len(set(got)) == 10
    assert got == sorted(got)
    assert all(v in pop for v in got)
