import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pooledq import (
    DomainError,
    Method,
    ReplicationSet,
    SamplePath,
    average_quantile,
    empirical_cdf,
    pooled_quantile,
    single_path_quantile,
)
from pooledq.estimators import order_index, quantile_pair


def sort_pooled(values, alpha):
    flat = sorted(np.ravel(values).tolist())
    return flat[max(1, math.ceil(Fraction(str(alpha)) * len(flat))) - 1]


def sort_average(values, alpha):
    picks = [sorted(row)[max(1, math.ceil(Fraction(str(alpha)) * len(row))) - 1] for row in np.asarray(values).tolist()]
    return float(np.mean(np.array(picks)))


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
levels = st.integers(1, 999).map(lambda k: k / 1000)


@st.composite
def replication_sets(draw, max_r=6, max_l=40):
    r = draw(st.integers(1, max_r))
    l = draw(st.integers(1, max_l))
    return draw(arrays(np.float64, (r, l), elements=finite))


def test_pooled_small_example():
    data = ReplicationSet([[1, 2, 3], [4, 5, 6]])
    est = pooled_quantile(data, 0.5)
    assert est.value == 3
    assert (est.method, est.r, est.l, est.n) == (Method.POOLED, 2, 3, 6)


@pytest.mark.parametrize("alpha", [0.01, 0.5, 0.99])
def test_degenerate_constant(alpha):
    data = ReplicationSet(np.full((3, 7), 2.5))
    assert pooled_quantile(data, alpha).value == 2.5
    assert average_quantile(data, alpha).value == 2.5


def test_pooled_matches_sort_random():
    rng = np.random.default_rng(0)
    values = rng.normal(size=(3, 4))
    assert pooled_quantile(ReplicationSet(values), 0.9).value == sorted(values.ravel())[10]


def test_single_path_examples():
    assert single_path_quantile([3.0, 1.0, 2.0], 0.5).value == 2.0
    assert single_path_quantile([7.0], 0.01).value == 7.0
    assert single_path_quantile(SamplePath([7.0]), 0.99).value == 7.0
    x = np.random.default_rng(1).normal(size=100)
    assert single_path_quantile(x, 0.95).value == sorted(x)[94]


def test_average_examples():
    assert average_quantile(ReplicationSet([[1, 2, 3], [4, 5, 6]]), 0.5).value == 3.5
    v = np.random.default_rng(2).normal(size=(5, 50))
    assert average_quantile(ReplicationSet(v), 0.3).value == sort_average(v, 0.3)


def test_empirical_cdf_examples():
    data = ReplicationSet([[1, 2], [3, 4]])
    assert empirical_cdf(data, 0.5) == 0.0
    assert empirical_cdf(data, 4) == 1.0
    assert empirical_cdf(data, 10) == 1.0
    assert empirical_cdf(data, 2.5) == 0.5


def test_order_index_decimal_intent():
    assert order_index(100, 0.07) == 7
    assert order_index(6, 0.5) == 3
    assert order_index(3, 0.5) == 2
    assert order_index(10**7, 0.95) == 9_500_000
    assert order_index(1, 0.001) == 1
    assert order_index(10, 0.999) == 10


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
def test_alpha_outside_open_interval(alpha):
    with pytest.raises(DomainError):
        pooled_quantile(ReplicationSet([[1.0, 2.0]]), alpha)


def test_ingestion_errors():
    with pytest.raises(DomainError):
        ReplicationSet([])
    with pytest.raises(DomainError):
        ReplicationSet([[1.0, 2.0], [3.0]])
    with pytest.raises(DomainError):
        ReplicationSet([[1.0, float("nan")]])
    with pytest.raises(DomainError):
        ReplicationSet(np.empty((2, 0)))
    with pytest.raises(DomainError):
        single_path_quantile([], 0.5)
    with pytest.raises(DomainError):
        single_path_quantile([1.0, float("nan")], 0.5)


def test_replication_set_is_immutable():
    data = ReplicationSet(np.ones((2, 3)))
    with pytest.raises(ValueError):
        data.values[0, 0] = 5.0
    assert (data.r, data.l, data.n) == (2, 3, 6)
    assert len(data.paths) == 2


@settings(max_examples=300, deadline=None)
@given(replication_sets(), levels)
def test_matches_sort_oracles(values, alpha):
    data = ReplicationSet(values)
    assert pooled_quantile(data, alpha).value == sort_pooled(values, alpha)
    assert average_quantile(data, alpha).value == sort_average(values, alpha)


@settings(max_examples=200, deadline=None)
@given(replication_sets(), levels)
def test_galois_link(values, alpha):
    data = ReplicationSet(values)
    q = pooled_quantile(data, alpha).value
    k = order_index(data.n, alpha)
    assert empirical_cdf(data, q) >= k / data.n
    below = values[values < q]
    if below.size:
        assert empirical_cdf(data, below.max()) < k / data.n


@settings(max_examples=200, deadline=None)
@given(replication_sets(), levels, levels)
def test_monotone_in_alpha(values, a1, a2):
    a1, a2 = min(a1, a2), max(a1, a2)
    data = ReplicationSet(values)
    assert pooled_quantile(data, a1).value <= pooled_quantile(data, a2).value
    assert average_quantile(data, a1).value <= average_quantile(data, a2).value


@settings(max_examples=200, deadline=None)
@given(replication_sets(), levels, st.floats(0.01, 100), st.floats(-100, 100))
def test_affine_equivariance(values, alpha, a, b):
    data = ReplicationSet(values)
    moved = data.affine(a, b)
    p = pooled_quantile(data, alpha).value
    assert pooled_quantile(moved, alpha).value == a * p + b
    avg = average_quantile(data, alpha).value
    assert average_quantile(moved, alpha).value == pytest.approx(a * avg + b, rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=finite), levels)
def test_r1_collapse(row, alpha):
    data = ReplicationSet([row])
    p = pooled_quantile(data, alpha).value
    assert p == average_quantile(data, alpha).value == single_path_quantile(row, alpha).value


@settings(max_examples=100, deadline=None)
@given(replication_sets(), st.lists(levels, min_size=1, max_size=4))
def test_quantile_pair_matches_single_calls(values, alphas):
    data = ReplicationSet(values)
    pair = quantile_pair(data, alphas)
    for i, a in enumerate(alphas):
        assert pair[i, 0] == pooled_quantile(data, a).value
        assert pair[i, 1] == average_quantile(data, a).value


def test_pooled_ecdf_concentrates():
    # sup-distance of the pooled ECDF to F shrinks with N for i.i.d. normals
    from scipy import stats

    rng = np.random.default_rng(5)
    d = []
    for n in (10**3, 10**5):
        v = rng.normal(size=(4, n // 4))
        d.append(stats.kstest(v.ravel(), "norm").statistic)
    assert d[1] < d[0] and d[1] < 0.01
