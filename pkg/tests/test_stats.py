import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpimc.stats import MCEstimate, PairStat, RunningStat, mc_mean, ratio_estimate


def test_constant_stream():
    est = mc_mean([3.0 + 1.0j] * 100)
    assert est.mean == 3.0 + 1.0j
    assert est.std_of_mean == 0.0
    assert est.n_samples == 100


def test_two_point_stream():
    est = mc_mean([0.0, 2.0])
    assert est.mean == pytest.approx(1.0)
    # sample std sqrt(2), standard error sqrt(2)/sqrt(2) = 1
    assert est.std_of_mean == pytest.approx(1.0)


def test_undefined_std():
    with pytest.raises(ValueError):
        mc_mean([1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=60),
       st.data())
def test_merge_halves_matches_whole(xs, data):
    cut = data.draw(st.integers(1, len(xs) - 1))
    whole = RunningStat()
    whole.add_batch(np.array(xs))
    left = RunningStat()
    left.add_batch(np.array(xs[:cut]))
    right = RunningStat()
    right.add_batch(np.array(xs[cut:]))
    left.merge(right)
    assert left.n == whole.n
    assert left.mean == pytest.approx(whole.mean, rel=1e-12, abs=1e-9)
    assert left.m2 == pytest.approx(whole.m2, rel=1e-12, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e2, 1e2), min_size=6, max_size=30))
def test_merge_order_independent(xs):
    a = np.array(xs[:2])
    b = np.array(xs[2:4])
    c = np.array(xs[4:])
    s1 = RunningStat(); s1.add_batch(a)
    t1 = RunningStat(); t1.add_batch(b)
    u1 = RunningStat(); u1.add_batch(c)
    s1.merge(t1); s1.merge(u1)
    s2 = RunningStat(); s2.add_batch(a)
    t2 = RunningStat(); t2.add_batch(b)
    u2 = RunningStat(); u2.add_batch(c)
    t2.merge(u2); s2.merge(t2)
    assert s1.mean == pytest.approx(s2.mean, rel=1e-12, abs=1e-9)
    assert s1.m2 == pytest.approx(s2.m2, rel=1e-12, abs=1e-9)


def test_estimate_shape():
    acc = RunningStat()
    acc.add_batch(np.array([1.0, 2.0, 3.0, 4.0]))
    est = acc.estimate()
    assert isinstance(est, MCEstimate)
    assert est.n_samples == 4
    assert est.mean == pytest.approx(2.5)


def test_ratio_simple():
    pair = PairStat()
    rng = np.random.default_rng(0)
    x = 2.0 + 0.01 * rng.standard_normal(50_000)
    y = 1.0 + 0.01 * rng.standard_normal(50_000)
    pair.add_batch(x, y)
    est = ratio_estimate(pair)
    assert not est.degenerate
    assert est.value == pytest.approx(2.0, abs=5 * est.std + 1e-3)


def test_ratio_degenerate_flag():
    pair = PairStat()
    rng = np.random.default_rng(1)
    x = rng.standard_normal(1000)
    y = rng.standard_normal(1000)      # denominator mean ~ 0
    pair.add_batch(x, y)
    est = ratio_estimate(pair)
    assert est.degenerate
    assert est.std == np.inf


def test_pairstat_merge_matches_whole():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(1000)
    y = x + rng.standard_normal(1000)
    whole = PairStat()
    whole.add_batch(x, y)
    a = PairStat(); a.add_batch(x[:300], y[:300])
    b = PairStat(); b.add_batch(x[300:], y[300:])
    a.merge(b)
    assert a.n == whole.n
    assert a.mx == pytest.approx(whole.mx, rel=1e-12)
    assert a.sxy == pytest.approx(whole.sxy, rel=1e-10)
