import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinfer.design import build_design, moment_variances
from spinfer.errors import DataError, EmptyInputError, InsufficientReplicationError

pairs = st.lists(st.tuples(st.sampled_from([0.0, 0.5, 1.0, 2.5, 7.0]), st.floats(-1e3, 1e3)),
                 min_size=1, max_size=40)


def test_single_observation():
    d = build_design([(1, 5)])
    assert (d.n, d.N) == (1, 1)
    np.testing.assert_array_equal(d.counts, [1])
    np.testing.assert_array_equal(d.means, [5.0])
    np.testing.assert_array_equal(d.biased_var, [0.0])


def test_three_replicates():
    d = build_design([(1, 1), (1, 2), (1, 3)])
    assert d.n == 1 and d.counts[0] == 3
    assert d.means[0] == 2.0
    assert d.unbiased_var[0] == pytest.approx(1.0)
    assert d.biased_var[0] == pytest.approx(2 / 3)


def test_influenza_layout(flu_data):
    raw = build_design(zip(flu_data.time, flu_data.value))
    assert (raw.n, raw.N) == (11, 165)
    assert set(raw.counts) == {15}


def test_moment_variances_examples():
    d = build_design([(0, 1), (0, 2), (0, 3)])
    np.testing.assert_allclose(moment_variances(d), [[1 / 3]])
    same = build_design([(0, 4.0)] * 3 + [(1, -2.0)] * 2)
    np.testing.assert_array_equal(moment_variances(same), np.zeros((2, 2)))


def test_moment_variances_brute_force():
    rng = np.random.default_rng(3)
    t = np.repeat(np.arange(4.0), 5)
    d = rng.normal(size=20)
    got = np.diag(moment_variances(build_design(zip(t, d))))
    expect = [np.var(d[t == ti], ddof=1) / 5 for ti in range(4)]
    np.testing.assert_allclose(got, expect, rtol=1e-12)


def test_moment_variances_need_replicates():
    with pytest.raises(InsufficientReplicationError):
        moment_variances(build_design([(0, 1), (0, 2), (1, 3)]))


def test_errors():
    with pytest.raises(EmptyInputError):
        build_design([])
    with pytest.raises(DataError):
        build_design([(0.0, float("nan"))])


@given(pairs)
def test_sum_of_squares_decomposition(obs):
    d = build_design(obs)
    raw = sum(v * v for _, v in obs)
    assert d.sum_of_squares() == pytest.approx(raw, rel=1e-12, abs=1e-9)


@given(pairs, st.randoms(use_true_random=False))
def test_permutation_invariance(obs, rnd):
    shuffled = list(obs)
    rnd.shuffle(shuffled)
    a, b = build_design(obs), build_design(shuffled)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.counts, b.counts)
    for x, y in zip(a.values, b.values):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_allclose(a.means, b.means, rtol=1e-12, atol=1e-12)


def test_merge_and_round_trip():
    d = build_design([(0, 1.0), (1, 2.0)])
    m = d.merge([1.0, 2.0], [3.0, 4.0])
    assert m.N == 4 and list(m.counts) == [1, 2, 1]
    back = type(d).from_dict(m.to_dict())
    np.testing.assert_array_equal(back.means, m.means)
