"""Intensity-correlation Bell test on the sampled PDC state.

Per trajectory, the four-mode quasitrajectory fields are rotated through both
polarizers and the intensity moments are accumulated as classical
expectations with unit weights (common random numbers across all angle
settings).  The exact Gaussian (Wick) values computed from the normal-ordered
covariance serve as the oracle columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .factorization import factorize_takagi
from .pdc import pdc_contour_covariance, pdc_doubled_covariance
from .sampling import QuasiTrajectory, RngStream
from .stats import MCEstimate, PairStat, RatioEstimate, RunningStat, ratio_estimate
from .wick import moment_of_linear_forms

CHUNK = 8192
DEFAULT_ANGLES_DEG = (0.0, 45.0, 22.5, 67.5)


@dataclass(frozen=True)
class BellConfig:
    kappa: float = 1.0
    times: tuple = ()              # values of kappa*t
    theta: float = DEFAULT_ANGLES_DEG[0]       # degrees
    theta_prime: float = DEFAULT_ANGLES_DEG[1]
    phi: float = DEFAULT_ANGLES_DEG[2]
    phi_prime: float = DEFAULT_ANGLES_DEG[3]
    n_samples: int = 100_000
    master_seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        for a in (self.theta, self.theta_prime, self.phi, self.phi_prime):
            if not np.isfinite(a):
                raise ValueError("angles must be finite")
        if any(kt < 0 for kt in self.times):
            raise ValueError("times must be >= 0")

    def angles_rad(self) -> tuple:
        return tuple(np.deg2rad(a) for a in
                     (self.theta, self.theta_prime, self.phi, self.phi_prime))


@dataclass
class PolarizedSample:
    """Field values behind the two polarizers; arrays broadcast over samples."""

    c_plus: np.ndarray
    c_minus: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    c_plus_sharp: np.ndarray
    c_minus_sharp: np.ndarray
    d_plus_sharp: np.ndarray
    d_minus_sharp: np.ndarray


def polarize(sample: QuasiTrajectory, theta: float, phi: float) -> PolarizedSample:
    """Rotate the (a1, a2) pair by theta and the (b1, b2) pair by phi (radians).

    The same real rotation acts on the alpha and the sharp fields, so
    |c+|^2 + |c-|^2 is preserved exactly per sample.
    """
    a = sample.alpha
    an = sample.alpha_sharp
    if a.shape[-1] != 4 or an.shape[-1] != 4:
        raise ValueError("polarize expects 4 modes (a1, a2, b1, b2)")
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    return PolarizedSample(
        c_plus=ct * a[..., 0] + st * a[..., 1],
        c_minus=-st * a[..., 0] + ct * a[..., 1],
        d_plus=cp * a[..., 2] + sp * a[..., 3],
        d_minus=-sp * a[..., 2] + cp * a[..., 3],
        c_plus_sharp=ct * an[..., 0] + st * an[..., 1],
        c_minus_sharp=-st * an[..., 0] + ct * an[..., 1],
        d_plus_sharp=cp * an[..., 2] + sp * an[..., 3],
        d_minus_sharp=-sp * an[..., 2] + cp * an[..., 3],
    )


@dataclass
class IntensityMoments:
    """MC estimates of the six intensity moments plus the S_CH ratio stream."""

    i_a: MCEstimate
    i_b: MCEstimate
    i_ab_tt: MCEstimate
    i_ab_tp: MCEstimate
    i_ab_pt: MCEstimate
    i_ab_pp: MCEstimate
    ratio_stream: PairStat = field(repr=False, default_factory=PairStat)


def _intensity_samples(traj: QuasiTrajectory, angles: tuple):
    """Per-sample values of the six moments and the (numerator, denominator) pair."""
    th, thp, ph, php = angles
    p_t_p = polarize(traj, th, ph)
    p_t_pp = polarize(traj, th, php)
    p_tp_p = polarize(traj, thp, ph)
    p_tp_pp = polarize(traj, thp, php)

    def iab(p):
        return (p.c_plus * p.c_plus_sharp) * (p.d_plus * p.d_plus_sharp)

    ab_tt = iab(p_t_p)
    ab_tp = iab(p_t_pp)
    ab_pt = iab(p_tp_p)
    ab_pp = iab(p_tp_pp)
    # I_A(theta') correlates transmission at A with the full intensity at B
    ia = (p_tp_p.c_plus * p_tp_p.c_plus_sharp) * (
        p_tp_p.d_plus * p_tp_p.d_plus_sharp + p_tp_p.d_minus * p_tp_p.d_minus_sharp)
    ib = (p_t_p.d_plus * p_t_p.d_plus_sharp) * (
        p_t_p.c_plus * p_t_p.c_plus_sharp + p_t_p.c_minus * p_t_p.c_minus_sharp)
    num = ab_tt - ab_tp + ab_pt + ab_pp
    den = ia + ib
    return (ia, ib, ab_tt, ab_tp, ab_pt, ab_pp), (num, den)


def _sample_contour_fields(L: np.ndarray, rng: np.random.Generator, size: int) -> QuasiTrajectory:
    """Draw the two-branch contour fields and keep the normal-ordered readout pair.

    The estimators read alpha on the forward branch and alpha_sharp on the
    backward branch; every pairing between them is normal ordered while the
    sampled fields keep their vacuum-scale fluctuations.
    """
    eta = rng.standard_normal((size, L.shape[1]))
    phi = eta @ L.T
    return QuasiTrajectory(alpha=phi[:, 0:4], alpha_sharp=phi[:, 12:16])


def _bell_chunk_worker(args):
    """Evaluate one trajectory chunk; top-level so worker pools can pickle it."""
    kappa, t, angles, master_seed, stream_index, size = args
    C16 = pdc_contour_covariance(kappa, t)
    L = factorize_takagi(C16).L
    rng = RngStream(master_seed, stream_index).generator()
    traj = _sample_contour_fields(L, rng, size)
    moments, (num, den) = _intensity_samples(traj, angles)
    accs = [RunningStat() for _ in range(6)]
    for acc, vals in zip(accs, moments):
        acc.add_batch(vals)
    pair = PairStat()
    pair.add_batch(num.real, den.real)
    return accs, pair


def intensity_moments_mc(cfg: BellConfig, t: float, stream_base: int = 0,
                         n_workers: int = 1) -> IntensityMoments:
    """Monte Carlo intensity moments at time t over cfg.n_samples trajectories.

    Trajectory chunks draw from counter-based streams indexed by
    (master_seed, stream_base + chunk) and are merged in chunk order, so
    results are independent of worker scheduling; all angle settings reuse
    each trajectory.
    """
    from .parallel import chunked_map

    angles = cfg.angles_rad()
    tasks = []
    done = 0
    chunk_id = 0
    while done < cfg.n_samples:
        size = min(CHUNK, cfg.n_samples - done)
        tasks.append((cfg.kappa, t, angles, cfg.master_seed, stream_base + chunk_id, size))
        done += size
        chunk_id += 1
    parts = chunked_map(_bell_chunk_worker, tasks, n_workers)
    accs = [RunningStat() for _ in range(6)]
    pair = PairStat()
    for chunk_accs, chunk_pair in parts:
        for acc, part in zip(accs, chunk_accs):
            acc.merge(part)
        pair.merge(chunk_pair)
    ests = [a.estimate() for a in accs]
    return IntensityMoments(i_a=ests[0], i_b=ests[1], i_ab_tt=ests[2], i_ab_tp=ests[3],
                            i_ab_pt=ests[4], i_ab_pp=ests[5], ratio_stream=pair)


def s_ch(moments: IntensityMoments) -> RatioEstimate:
    """Clauser-Horne ratio with first-order error propagation.

    The numerator/denominator covariance comes from the per-trajectory
    streams; a denominator consistent with zero (within 2 standard errors)
    is flagged degenerate and reported with an infinite band.
    """
    return ratio_estimate(moments.ratio_stream)


def _forms(theta: float, phi: float):
    """Linear forms of the polarized fields over the 8-component doubled index."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    c_plus = [(0, ct), (1, st)]
    c_minus = [(0, -st), (1, ct)]
    d_plus = [(2, cp), (3, sp)]
    d_minus = [(2, -sp), (3, cp)]
    shift = lambda form: [(i + 4, c) for (i, c) in form]
    return c_plus, c_minus, d_plus, d_minus, shift


def oracle_moments(kappa: float, t: float, angles_rad: tuple) -> dict:
    """Exact Wick values of the six intensity moments and S_CH."""
    th, thp, ph, php = angles_rad
    C8 = pdc_doubled_covariance(kappa, t).entries

    def iab(theta, phi):
        cP, cM, dP, dM, sh = _forms(theta, phi)
        return moment_of_linear_forms(C8, [cP, sh(cP), dP, sh(dP)])

    def ia(theta, phi):
        cP, cM, dP, dM, sh = _forms(theta, phi)
        return (moment_of_linear_forms(C8, [cP, sh(cP), dP, sh(dP)])
                + moment_of_linear_forms(C8, [cP, sh(cP), dM, sh(dM)]))

    def ib(theta, phi):
        cP, cM, dP, dM, sh = _forms(theta, phi)
        return (moment_of_linear_forms(C8, [dP, sh(dP), cP, sh(cP)])
                + moment_of_linear_forms(C8, [dP, sh(dP), cM, sh(cM)]))

    vals = {
        "i_a": ia(thp, ph),
        "i_b": ib(th, ph),
        "i_ab_tt": iab(th, ph),
        "i_ab_tp": iab(th, php),
        "i_ab_pt": iab(thp, ph),
        "i_ab_pp": iab(thp, php),
    }
    num = vals["i_ab_tt"] - vals["i_ab_tp"] + vals["i_ab_pt"] + vals["i_ab_pp"]
    den = vals["i_a"] + vals["i_b"]
    vals["s_ch"] = num / den if den != 0 else np.nan
    return {k: complex(v) for k, v in vals.items()}


_MOMENT_KEYS = ("i_a", "i_b", "i_ab_tt", "i_ab_tp", "i_ab_pt", "i_ab_pp")


def bell_sweep(cfg: BellConfig, n_workers: int = 1) -> list[dict]:
    """One row per requested kappa*t value; deterministic under fixed seed."""
    rows = []
    for ti, kt in enumerate(cfg.times):
        t = kt / cfg.kappa if cfg.kappa > 0 else 0.0
        moments = intensity_moments_mc(cfg, t, stream_base=ti << 32, n_workers=n_workers)
        ratio = s_ch(moments)
        oracle = oracle_moments(cfg.kappa, t, cfg.angles_rad())
        row = {"kappa_t": kt,
               "s_ch_mean": float(np.real(ratio.value)),
               "s_ch_std": ratio.std,
               "s_ch_oracle": oracle["s_ch"].real,
               "s_ch_degenerate": int(ratio.degenerate)}
        for key in _MOMENT_KEYS:
            est: MCEstimate = getattr(moments, key)
            row[f"{key}_mean"] = est.re
            row[f"{key}_std"] = est.std_of_mean
            row[f"{key}_oracle"] = oracle[key].real
        row["n_samples"] = cfg.n_samples
        row["seed"] = cfg.master_seed
        rows.append(row)
    return rows


def bell_sweep_parallel(cfg: BellConfig, n_workers: int = 1) -> list[dict]:
    """Worker-pool variant of bell_sweep with identical output."""
    return bell_sweep(cfg, n_workers=n_workers)
