import inspect

import numpy as np
import pytest

from gpimc.bell import (BellConfig, bell_sweep, intensity_moments_mc, oracle_moments,
                        polarize, s_ch)
from gpimc.sampling import QuasiTrajectory, RngStream
from gpimc.stats import PairStat, RunningStat

from ._oracles import intensity_fock

ANGLES = tuple(np.deg2rad(a) for a in (0.0, 45.0, 22.5, 67.5))


def _random_traj(seed, n=1000):
    rng = RngStream(seed, 0).generator()
    a = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
    s = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
    return QuasiTrajectory(alpha=a, alpha_sharp=s)


def test_polarize_zero_angle():
    traj = _random_traj(1)
    p = polarize(traj, 0.0, 0.0)
    assert np.array_equal(p.c_plus, traj.alpha[:, 0])
    assert np.array_equal(p.c_minus, traj.alpha[:, 1])


def test_polarize_quarter_turn():
    traj = _random_traj(2)
    p = polarize(traj, np.pi / 2, 0.0)
    assert np.allclose(p.c_plus, traj.alpha[:, 1])
    assert np.allclose(p.c_minus, -traj.alpha[:, 0])


def test_polarize_norm_preserved():
    traj = _random_traj(3)
    p = polarize(traj, 0.613, 1.07)
    lhs = np.abs(p.c_plus) ** 2 + np.abs(p.c_minus) ** 2
    rhs = np.abs(traj.alpha[:, 0]) ** 2 + np.abs(traj.alpha[:, 1]) ** 2
    assert np.allclose(lhs, rhs)
    lhs_sharp = np.abs(p.c_plus_sharp) ** 2 + np.abs(p.c_minus_sharp) ** 2
    rhs_sharp = np.abs(traj.alpha_sharp[:, 0]) ** 2 + np.abs(traj.alpha_sharp[:, 1]) ** 2
    assert np.allclose(lhs_sharp, rhs_sharp)


def test_polarize_mode_count():
    bad = QuasiTrajectory(alpha=np.zeros((5, 3), complex), alpha_sharp=np.zeros((5, 3), complex))
    with pytest.raises(ValueError):
        polarize(bad, 0.0, 0.0)


def test_vacuum_moments_zero():
    cfg = BellConfig(times=(0.0,), n_samples=20_000, master_seed=4)
    m = intensity_moments_mc(cfg, 0.0)
    for key in ("i_a", "i_b", "i_ab_tt", "i_ab_pp"):
        est = getattr(m, key)
        assert abs(est.mean) <= 5 * max(est.std_of_mean, 1e-12)
    oracle = oracle_moments(1.0, 0.0, cfg.angles_rad())
    assert all(abs(v) < 1e-14 for v in oracle.values() if not np.isnan(v))


def test_moments_match_oracle():
    cfg = BellConfig(times=(0.5,), n_samples=60_000, master_seed=12)
    m = intensity_moments_mc(cfg, 0.5)
    oracle = oracle_moments(1.0, 0.5, cfg.angles_rad())
    for key in ("i_a", "i_b", "i_ab_tt", "i_ab_tp", "i_ab_pt", "i_ab_pp"):
        est = getattr(m, key)
        assert abs(est.mean - oracle[key]) <= 5 * est.std_of_mean
        # the underlying operators are Hermitian
        assert abs(est.im) <= 5 * est.std_of_mean


def test_oracle_matches_fock():
    th, _, ph, _ = ANGLES
    oracle = oracle_moments(1.0, 0.5, ANGLES)
    assert oracle["i_ab_tt"].real == pytest.approx(intensity_fock(0.5, th, ph, "ab"), abs=1e-8)
    assert oracle["i_b"].real == pytest.approx(intensity_fock(0.5, th, ph, "b"), abs=1e-8)


def test_i_a_positive_and_growing():
    vals = [oracle_moments(1.0, kt, ANGLES)["i_a"].real for kt in (0.2, 0.5, 0.9, 1.3)]
    assert all(v > 0 for v in vals)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_i_a_angle_symmetric():
    refs = []
    for theta_prime in (0.0, 30.0, 45.0):
        ang = tuple(np.deg2rad(a) for a in (0.0, theta_prime, 22.5, 67.5))
        refs.append(oracle_moments(1.0, 0.7, ang)["i_a"].real)
    assert max(refs) - min(refs) < 1e-10


def test_s_ch_boundary_case():
    pair = PairStat()
    rng = np.random.default_rng(0)
    base = 1.0 + 0.01 * rng.standard_normal(10_000)
    pair.add_batch(base, base)      # numerator == denominator
    from gpimc.bell import IntensityMoments
    from gpimc.stats import MCEstimate
    one = MCEstimate(1.0, 0.0, 10_000)
    m = IntensityMoments(one, one, one, one, one, one, ratio_stream=pair)
    est = s_ch(m)
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert not est.degenerate


def test_s_ch_small_time_limit_is_max_violation():
    oracle = oracle_moments(1.0, 1e-6, ANGLES)
    assert abs(oracle["s_ch"].real - 1.2) < 0.05
    # the exact limit is (1 + sqrt(2))/2
    assert oracle["s_ch"].real == pytest.approx((1.0 + np.sqrt(2)) / 2, abs=1e-4)


def test_s_ch_oracle_decreasing():
    grid = np.linspace(0.2, 1.5, 14)
    vals = [oracle_moments(1.0, kt, ANGLES)["s_ch"].real for kt in grid]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_sweep_empty():
    cfg = BellConfig(times=(), n_samples=100, master_seed=0)
    assert bell_sweep(cfg) == []


def test_sweep_deterministic():
    cfg = BellConfig(times=(0.3, 0.8), n_samples=8_000, master_seed=21)
    rows1 = bell_sweep(cfg)
    rows2 = bell_sweep(cfg)
    assert rows1 == rows2


def test_sweep_matches_oracle_columns():
    cfg = BellConfig(times=(0.4,), n_samples=40_000, master_seed=8)
    row = bell_sweep(cfg)[0]
    for key in ("i_a", "i_b", "i_ab_tt", "i_ab_tp", "i_ab_pt", "i_ab_pp"):
        assert abs(row[f"{key}_mean"] - row[f"{key}_oracle"]) <= 5 * row[f"{key}_std"]
    if not row["s_ch_degenerate"]:
        assert abs(row["s_ch_mean"] - row["s_ch_oracle"]) <= 5 * row["s_ch_std"]


def test_accumulators_take_no_weights():
    # classical bound structure: every sample enters with unit weight
    assert "weights" not in inspect.signature(RunningStat.add_batch).parameters
    assert "weights" not in inspect.signature(PairStat.add_batch).parameters


def test_angle_defaults_are_max_violation_setting():
    cfg = BellConfig()
    assert (cfg.theta, cfg.theta_prime, cfg.phi, cfg.phi_prime) == (0.0, 45.0, 22.5, 67.5)
