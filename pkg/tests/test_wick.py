import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpimc.factorization import factorize_takagi
from gpimc.pdc import pdc_doubled_covariance
from gpimc.sampling import RngStream, sample_doubled
from gpimc.wick import moment_of_linear_forms, wick_moment

from ._oracles import intensity_fock


def _random_symmetric(seed, n=6):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return X + X.T


def test_pair_moment():
    C = _random_symmetric(0)
    assert wick_moment(C, (1, 4)) == pytest.approx(C[1, 4])


def test_quartic_three_pairings():
    C = _random_symmetric(1)
    direct = C[0, 1] * C[2, 3] + C[0, 2] * C[1, 3] + C[0, 3] * C[1, 2]
    assert wick_moment(C, (0, 1, 2, 3)) == pytest.approx(direct)


def test_odd_vanishes():
    C = _random_symmetric(2)
    assert wick_moment(C, (0, 1, 2)) == 0


def test_length_cap():
    C = np.eye(4, dtype=complex)
    with pytest.raises(ValueError):
        wick_moment(C, (0,) * 14)


def test_empty_monomial():
    assert wick_moment(np.eye(2), ()) == 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_sextic_recursion_consistency(seed):
    # six-index moment equals first-index expansion over partners
    C = _random_symmetric(seed)
    mono = (0, 1, 2, 3, 4, 5)
    expand = sum(C[0, mono[j]] * wick_moment(C, tuple(m for i, m in enumerate(mono)
                                                      if i not in (0, j)))
                 for j in range(1, 6))
    assert wick_moment(C, mono) == pytest.approx(expand)


def test_quartic_intensity_vs_fock_oracle():
    # normal-ordered intensity moment from pairings == operator expectation
    r = 0.5
    theta, phi = np.deg2rad(10.0), np.deg2rad(35.0)
    C = pdc_doubled_covariance(1.0, r).entries
    ct, st_ = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    c_plus = [(0, ct), (1, st_)]
    d_plus = [(2, cp), (3, sp)]
    sharp = lambda form: [(i + 4, coeff) for (i, coeff) in form]
    val = moment_of_linear_forms(C, [c_plus, sharp(c_plus), d_plus, sharp(d_plus)])
    ref = intensity_fock(r, theta, phi, "ab")
    assert abs(val - ref) < 1e-8


def test_mc_equivalence_random_monomials():
    C = pdc_doubled_covariance(1.0, 0.4).entries
    f = factorize_takagi(C)
    rng = RngStream(99, 0).generator()
    qt = sample_doubled(f, rng, size=100_000)
    phi = np.concatenate([qt.alpha, qt.alpha_sharp], axis=1)
    pick = np.random.default_rng(5)
    for _ in range(6):
        length = pick.choice([2, 4, 6])
        mono = tuple(pick.integers(0, 8) for _ in range(length))
        vals = np.prod([phi[:, i] for i in mono], axis=0)
        est_mean = vals.mean()
        se = np.abs(vals - est_mean).std() / np.sqrt(vals.size)
        exact = wick_moment(C, mono)
        assert abs(est_mean - exact) <= 5 * max(se, 1e-12)
