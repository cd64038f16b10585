import numpy as np
import pytest

from gpimc.contour import bath_green_single_mode, build_contour
from gpimc.factorization import factorize_svd, factorize_takagi
from gpimc.pdc import pdc_doubled_covariance
from gpimc.sampling import RngStream, sample_doubled, sample_gamma, sample_quasitrajectory


class _ZeroRng:
    def standard_normal(self, shape=None):
        return np.zeros(shape if shape is not None else ())


def test_stream_reproducibility():
    a = RngStream(123, 7).generator().standard_normal(16)
    b = RngStream(123, 7).generator().standard_normal(16)
    c = RngStream(123, 8).generator().standard_normal(16)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gamma_empty():
    rng = RngStream(0, 0).generator()
    assert sample_gamma(0, rng).shape == (0,)


def test_gamma_moments():
    rng = RngStream(2024, 0).generator()
    g = sample_gamma(1, rng, size=1_000_000)[:, 0]
    assert abs(np.mean(np.abs(g) ** 2) - 1.0) < 5e-3
    assert abs(np.mean(g ** 2)) < 5e-3


def test_quasitrajectory_zero_gamma():
    G = bath_green_single_mode(build_contour(1.0, 2), 1.0)
    f = factorize_svd(G)
    qt = sample_quasitrajectory(f, _ZeroRng())
    assert np.all(qt.alpha == 0)
    assert np.all(qt.alpha_sharp == 0)


def test_scalar_covariance():
    f = factorize_svd(np.array([[1.0]], dtype=complex))
    rng = RngStream(5, 0).generator()
    qt = sample_quasitrajectory(f, rng, size=1_000_000)
    prod = qt.alpha_sharp[:, 0] * qt.alpha[:, 0]
    assert abs(np.mean(prod) - 1.0) < 5e-3


def test_bath_covariance_entrywise():
    G = bath_green_single_mode(build_contour(1.0, 5), 1.0)
    f = factorize_svd(G)
    rng = RngStream(11, 0).generator()
    N = 100_000
    qt = sample_quasitrajectory(f, rng, size=N)
    prods_mean = qt.alpha_sharp.T @ qt.alpha / N
    second = (np.abs(qt.alpha_sharp) ** 2).T @ (np.abs(qt.alpha) ** 2) / N
    stderr = np.sqrt(np.maximum(second - np.abs(prods_mean) ** 2, 0.0) / N)
    z = np.abs(prods_mean - G) / np.maximum(stderr, 1e-12)
    assert z.max() < 5.0


def test_doubled_zero_eta():
    C = pdc_doubled_covariance(1.0, 0.5).entries
    f = factorize_takagi(C)
    qt = sample_doubled(f, _ZeroRng())
    assert np.all(qt.alpha == 0) and np.all(qt.alpha_sharp == 0)


def test_doubled_identity_covariance():
    f = factorize_takagi(np.eye(2, dtype=complex))
    rng = RngStream(3, 0).generator()
    qt = sample_doubled(f, rng, size=100_000)
    phi1 = qt.alpha[:, 0]
    est = np.mean(phi1 ** 2)
    se = np.std(phi1 ** 2) / np.sqrt(phi1.size)
    assert abs(est - 1.0) < 5 * se


def test_doubled_pdc_anomalous_entry():
    C = pdc_doubled_covariance(1.0, 0.5)
    f = factorize_takagi(C.entries)
    rng = RngStream(17, 0).generator()
    qt = sample_doubled(f, rng, size=100_000)
    # modes ordered (a1, a2, b1, b2): anomalous pair (a1, b1)
    prod = qt.alpha[:, 0] * qt.alpha[:, 2]
    se = np.std(np.real(prod)) / np.sqrt(prod.size)
    target = C.entries[0, 2]
    assert abs(np.mean(prod) - target) < 5 * se


def test_doubled_full_covariance():
    C = pdc_doubled_covariance(1.0, 0.5).entries
    f = factorize_takagi(C)
    rng = RngStream(23, 0).generator()
    N = 100_000
    qt = sample_doubled(f, rng, size=N)
    phi = np.concatenate([qt.alpha, qt.alpha_sharp], axis=1)
    mean = phi.T @ phi / N
    second = (np.abs(phi) ** 2).T @ (np.abs(phi) ** 2) / N
    stderr = np.sqrt(np.maximum(second - np.abs(mean) ** 2, 0.0) / N)
    z = np.abs(mean - C) / np.maximum(stderr, 1e-12)
    assert z.max() < 5.0
