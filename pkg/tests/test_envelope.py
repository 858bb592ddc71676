import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stsep.envelope import (
    RankMatrix,
    critical_measure,
    deviation_pvalue,
    envelope_test,
    erl_measures,
    global_envelope,
    mc_pvalue,
    pointwise_ranks,
)


def brute_measures(sorted_ranks):
    r = [tuple(x) for x in sorted_ranks]
    return np.array([sum(b < a for b in r) for a in r]) / len(r)


def test_rank_examples():
    np.testing.assert_array_equal(pointwise_ranks([[1], [2], [3]]).ranks[:, 0], [1, 2, 1])
    np.testing.assert_array_equal(pointwise_ranks([[4], [4], [4]]).ranks[:, 0], [3, 3, 3])
    np.testing.assert_array_equal(pointwise_ranks([[5], [1], [4], [2], [3]]).ranks[:, 0], [1, 1, 2, 2, 3])


def test_ragged():
    with pytest.raises(ValueError, match="ragged"):
        pointwise_ranks([[1, 2], [1]])


def test_erl_examples():
    rm = RankMatrix(np.array([[1, 1], [1, 2], [2, 2]]), np.array([[1, 1], [1, 2], [2, 2]]))
    np.testing.assert_allclose(erl_measures(rm), [0, 1 / 3, 2 / 3])
    same = np.ones((4, 3), int)
    np.testing.assert_array_equal(erl_measures(RankMatrix(same, same)), 0)
    rng = np.random.default_rng(0)
    r = np.sort(rng.integers(1, 4, (5, 3)), axis=1)
    np.testing.assert_allclose(erl_measures(RankMatrix(r, r)), brute_measures(r))


@given(arrays(float, st.tuples(st.integers(2, 12), st.integers(1, 6)), elements=st.integers(-3, 3).map(float)))
def test_rank_bounds(s):
    rm = pointwise_ranks(s)
    n1 = s.shape[0]
    assert rm.ranks.min() >= 1
    # a fully tied column gets n+1; otherwise ranks stay in the lower half
    untied = np.ptp(s, axis=0) > 0
    assert np.all(rm.ranks[:, untied] <= int(np.ceil(n1 / 2)) + (n1 // 2))
    assert np.all(np.diff(rm.sorted_ranks, axis=1) >= 0)


def test_rank_bound_distinct_values():
    rng = np.random.default_rng(3)
    for n1 in range(2, 12):
        s = rng.normal(size=(n1, 4))
        assert pointwise_ranks(s).ranks.max() <= int(np.ceil(n1 / 2))


def test_pvalues():
    m = np.concatenate([[0.0], np.linspace(0.1, 1, 2499)])
    assert mc_pvalue(m) == pytest.approx(4e-4)
    assert mc_pvalue(np.array([0.9, 0.1, 0.2])) == 1.0
    assert mc_pvalue(np.zeros(10)) == 1.0
    v = np.concatenate([[1000.0], np.arange(199.0)])
    assert deviation_pvalue(v) == pytest.approx(1 / 200)
    assert deviation_pvalue(np.array([-1.0, 0, 1, 2])) == 1.0
    w = np.array([2.0, 2.0, 1.0, 3.0, 2.0, 0.0])
    assert deviation_pvalue(w) == np.count_nonzero(w >= 2.0) / 6


def test_envelope_all_retained():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(20, 7))
    env = global_envelope(s, np.ones(20), alpha=0.05)
    np.testing.assert_allclose(env.low, s.min(0))
    np.testing.assert_allclose(env.upp, s.max(0))
    assert not env.above.any() and not env.below.any()


def test_data_largest_everywhere():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(100, 10))
    s[0] = s[1:].max(axis=0) + 1
    env = envelope_test(s, 0.05)
    keep = env.measures >= critical_measure(env.measures, 0.05)
    assert not keep[0]
    np.testing.assert_array_equal(env.above, s[0] > s[keep].max(axis=0))
    assert env.above.all()
    assert env.p_value == pytest.approx(0.01)


def test_exit_implies_small_measure():
    rng = np.random.default_rng(4)
    for _ in range(50):
        s = rng.normal(size=(40, 5))
        env = envelope_test(s, 0.05)
        m_a = critical_measure(env.measures, 0.05)
        if env.above.any() or env.below.any():
            assert env.measures[0] < m_a


def test_insufficient_replicates():
    with pytest.raises(ValueError, match="insufficient replicates for level"):
        critical_measure(np.zeros(10), 0.05)


@given(st.integers(0, 2**32 - 1), st.sampled_from([np.exp, np.tanh, lambda x: x**3 + x]))
def test_monotone_invariance(seed, f):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(40, 6))
    a, b = envelope_test(s), envelope_test(f(s))
    np.testing.assert_array_equal(pointwise_ranks(s).ranks, pointwise_ranks(f(s)).ranks)
    np.testing.assert_array_equal(a.measures, b.measures)
    assert a.p_value == b.p_value
    np.testing.assert_array_equal(a.exit_codes, b.exit_codes)
    np.testing.assert_allclose(f(a.low), b.low)


@given(st.integers(0, 2**32 - 1))
def test_containment_and_pmin(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(20, 4)).round(1)
    env = envelope_test(s, 0.05)
    keep = env.measures >= critical_measure(env.measures, 0.05)
    assert np.all(s[keep] >= env.low) and np.all(s[keep] <= env.upp)
    assert np.all(env.low <= env.upp)
    assert 1 / 20 <= env.p_value <= 1


def test_erl_exhaustive_small():
    # every rank matrix with up to 6 rows, 2 columns over {1,2,3}; the 3-column case lives in the acceptance suite
    for rows in range(1, 5):
        for flat in itertools.product((1, 2, 3), repeat=rows * 2):
            r = np.sort(np.array(flat).reshape(rows, 2), axis=1)
            np.testing.assert_allclose(erl_measures(RankMatrix(r, r)), brute_measures(r))
