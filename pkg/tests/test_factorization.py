import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpimc.contour import bath_green_single_mode, build_contour
from gpimc.factorization import factorize_svd, factorize_takagi
from gpimc.pdc import pdc_doubled_covariance


def test_svd_identity():
    f = factorize_svd(np.eye(3))
    assert f.rank == 3
    assert np.allclose(f.reconstruct(), np.eye(3), atol=1e-14)


def test_svd_rank_deflation():
    f = factorize_svd(np.diag([4.0, 0.0]), rank_tol=1e-12)
    assert f.rank == 1
    assert f.residual(np.diag([4.0, 0.0])) <= 1e-12


def test_svd_bath_green_residual():
    g = build_contour(1.0, 20)
    G = bath_green_single_mode(g, 1.0)
    f = factorize_svd(G)
    assert f.residual(G) <= 1e-10


def test_svd_rejects_nonfinite():
    bad = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ValueError):
        factorize_svd(bad)


def test_takagi_zero():
    f = factorize_takagi(np.zeros((3, 3)))
    assert f.rank == 0
    assert f.reconstruct().shape == (3, 3)
    assert np.all(f.reconstruct() == 0)


def test_takagi_identity():
    f = factorize_takagi(np.eye(4))
    assert np.allclose(f.reconstruct(), np.eye(4), atol=1e-12)


def test_takagi_pdc():
    C = pdc_doubled_covariance(1.0, 0.5).entries
    f = factorize_takagi(C)
    assert f.residual(C) <= 1e-10


def test_takagi_rejects_asymmetric():
    C = np.array([[0.0, 1.0], [2.0, 0.0]], dtype=complex)
    with pytest.raises(ValueError):
        factorize_takagi(C)


def test_takagi_negative_real_eigenvalue():
    C = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    f = factorize_takagi(C)
    assert f.residual(C) <= 1e-12


_cnum = st.floats(-5, 5, allow_nan=False, allow_infinity=False, width=32)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 5), elements=_cnum), arrays(np.float64, (5, 5), elements=_cnum))
def test_takagi_random_symmetric(a, b):
    X = a + 1j * b
    C = X + X.T
    f = factorize_takagi(C)
    assert f.residual(C) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 4), elements=_cnum), arrays(np.float64, (4, 4), elements=_cnum))
def test_svd_random(a, b):
    G = a + 1j * b
    f = factorize_svd(G)
    assert f.residual(G) <= 1e-10
