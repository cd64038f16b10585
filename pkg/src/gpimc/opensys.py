"""Open-system dynamics unraveled as classical non-Markovian noise.

A harmonic mode ("system", frequency epsilon) couples with strength h to a
single harmonic bath mode (frequency omega) prepared in vacuum.  The bath is
integrated out: forward and backward branch states evolve under a stochastic
Hamiltonian whose noise fields reproduce the bath's contour pair correlation.

Two noise constructions are provided:

* unshifted: fields drawn from a factorization of the full contour Green
  matrix (alpha = W^T gamma, alpha_sharp = U conj(gamma)).  Estimators carry
  the forward/backward overlap as a weight.  Exact, but the overlap
  fluctuates exponentially in time, so the variance explodes and long runs
  must flag divergent trajectories.

* shifted: the bath's vacuum-mode fluctuation enters as a single complex
  normal per trajectory, conjugate-paired between the two field channels, and
  the remaining (retarded, deterministic-given-history) part of the bath
  response is carried by the causal shift built from the running means
  bbar, bbar_plus.  The stochastic Hamiltonian is then Hermitian, evolution
  is pathwise unitary, the overlap stays at 1, and the normalized estimator
  has bounded variance.  First moments match the exact dynamics; this is the
  variance-controlled production scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .contour import ContourGrid, bath_green_single_mode, build_contour
from .factorization import Factorization
from .sampling import RngStream, sample_gamma
from .stats import MCEstimate

DIVERGENCE_BOUND = 1e30
_LOG_DIVERGENCE = np.log(DIVERGENCE_BOUND)

COHERENT_CHUNK = 2048
UNSHIFTED_COHERENT_CHUNK = 512
FOCK_CHUNK = 128
_FFT_SUBBATCH = 128


class SequencingError(RuntimeError):
    """Raised when a shift is requested before its history is available."""


@dataclass(frozen=True)
class OpenSystemConfig:
    epsilon: float = 1.0
    omega: float = 1.0
    coupling: float = 2.0
    t_final: float = 10.0
    steps: int = 10_000
    n_samples: int = 10_000
    master_seed: int = 0
    shift_enabled: bool = True
    mode: str = "coherent"          # "coherent" or "fock"
    n_max: int = 20
    method: str = "euler"           # "euler" or "midpoint"
    b0: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.t_final <= 0 or self.steps < 1:
            raise ValueError("t_final and steps must be positive")
        if self.mode not in ("coherent", "fock"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "fock" and self.n_max < 2:
            raise ValueError("n_max must be >= 2 in fock mode")
        if self.method not in ("euler", "midpoint"):
            raise ValueError(f"unknown method {self.method!r}")

    def grid(self) -> ContourGrid:
        return build_contour(self.t_final, self.steps)


def discretized_bath_green(grid: ContourGrid, omega: float, scale: float = 1.0) -> np.ndarray:
    """Contour bath Green matrix with any coupling/step normalization folded in.

    The shipped engines keep the coupling in the equations of motion and the
    step factors in the quadrature weights, so scale defaults to 1.
    """
    return scale * bath_green_single_mode(grid, omega)


class BathModeSampler:
    """Samples quasitrajectories of the contour bath Green matrix.

    Realizes the SVD factorization of G in closed form: with node phases
    D = diag(e^{-i omega t_l}), G = D theta D^*, where theta is the
    lower-triangular matrix of ones whose singular triplets are known
    analytically (sine modes).  Applying the sine basis is done with FFTs and
    theta itself with cumulative sums, so sampling costs O(n log n) per
    trajectory instead of an O(n^3) decomposition.
    """

    def __init__(self, grid: ContourGrid, omega: float):
        self.grid = grid
        self.omega = omega
        n = grid.n_nodes
        self.n = n
        k = np.arange(1, n + 1)
        phi = (2 * k - 1) * np.pi / (2 * n + 1)
        self.sigma = 1.0 / (2.0 * np.sin(phi / 2.0))
        self.phase_minus = np.exp(-1j * omega * grid.times)
        self.phase_plus = np.conj(self.phase_minus)

    def _sine_apply(self, x: np.ndarray) -> np.ndarray:
        """y_l = sum_k sin(l phi_k) x_k * 2/sqrt(2n+1), batched over rows."""
        n = self.n
        M = 2 * (2 * n + 1)
        out = np.empty_like(x)
        for lo in range(0, x.shape[0], _FFT_SUBBATCH):
            hi = min(lo + _FFT_SUBBATCH, x.shape[0])
            y = np.zeros((hi - lo, M), dtype=complex)
            y[:, 1:n + 1] = x[lo:hi]
            Q = scipy.fft.fft(y, axis=-1)
            idx = 2 * np.arange(1, n + 1) - 1
            out[lo:hi] = (Q[:, (M - idx) % M] - Q[:, idx]) / 2j
        return out * (2.0 / np.sqrt(2 * n + 1))

    def sample(self, rng: np.random.Generator, size: int):
        """Draw (alpha, alpha_sharp), each (size, n), with E[sharp x alpha^T] = G."""
        gamma = sample_gamma(self.n, rng, size=size)
        a = self._sine_apply(gamma / np.sqrt(self.sigma))
        alpha = self.phase_plus[None, :] * np.cumsum(a[:, ::-1], axis=1)[:, ::-1]
        sharp = self.phase_minus[None, :] * self._sine_apply(np.conj(gamma) * np.sqrt(self.sigma))
        return alpha, sharp

    def materialize_factorization(self) -> Factorization:
        """Dense (U, W) of the closed-form SVD; for small grids and tests."""
        n = self.n
        l = np.arange(1, n + 1)[:, None]
        k = np.arange(1, n + 1)
        phi = (2 * k - 1) * np.pi / (2 * n + 1)
        Us = np.sin(l * phi[None, :]) * (2.0 / np.sqrt(2 * n + 1))
        Vs = np.cumsum(Us[::-1, :], axis=0)[::-1, :] / self.sigma[None, :]
        root = np.sqrt(self.sigma)
        U = (self.phase_minus[:, None] * Us) * root[None, :]
        W = root[:, None] * (Vs.T * self.phase_plus[None, :])
        return Factorization(U=U, W=W, rank_tol=0.0)


@dataclass
class NoiseTrajectory:
    """Per-node field values plus the additive shift actually applied."""

    grid: ContourGrid
    alpha: np.ndarray         # (..., n_nodes)
    alpha_sharp: np.ndarray
    shift_alpha: np.ndarray
    shift_sharp: np.ndarray

    @property
    def alpha_plus(self) -> np.ndarray:
        return self.alpha[..., :self.grid.steps + 1]

    @property
    def alpha_minus(self) -> np.ndarray:
        return self.alpha[..., self.grid.steps + 1:][..., ::-1]

    @property
    def alpha_sharp_plus(self) -> np.ndarray:
        return self.alpha_sharp[..., :self.grid.steps + 1]

    @property
    def alpha_sharp_minus(self) -> np.ndarray:
        return self.alpha_sharp[..., self.grid.steps + 1:][..., ::-1]


def generate_base_noise(f, rng: np.random.Generator, size: int | None = None,
                        grid: ContourGrid | None = None) -> NoiseTrajectory:
    """Unshifted contour fields from a factorization (dense or structured).

    E[alpha_sharp (x) alpha^T] equals the factorized Green matrix; anomalous
    second moments vanish.  The shift arrays start at zero.
    """
    B = 1 if size is None else size
    if isinstance(f, BathModeSampler):
        alpha, sharp = f.sample(rng, B)
        g = f.grid
    else:
        if grid is None:
            raise ValueError("a ContourGrid is required with a dense Factorization")
        gamma = sample_gamma(f.rank, rng, size=B)
        alpha = gamma @ np.ascontiguousarray(f.W)
        sharp = np.conj(gamma) @ f.U.T
        g = grid
    if size is None:
        alpha, sharp = alpha[0], sharp[0]
    z = np.zeros_like(alpha)
    return NoiseTrajectory(grid=g, alpha=alpha, alpha_sharp=sharp,
                           shift_alpha=z, shift_sharp=z.copy())


def compute_shift(grid: ContourGrid, G_scaled: np.ndarray, node: int,
                  bbar_nodes: np.ndarray, bbar_plus_nodes: np.ndarray) -> tuple:
    """Discretized retarded shift pair at one contour node.

    Left-endpoint contour quadrature over strictly contour-earlier (for the
    bbar-driven component) and strictly contour-later (for the bbar_plus
    component, which the backward branch's reversed real-time order makes
    causal) nodes, with branch weights +dt / -dt:

        shift_sharp(l) = -i sum_{p < l} w_p bbar(p) G[l, p]
        shift_alpha(l) = -i sum_{p > l} w_p bbar_plus(p) G[p, l]

    The bbar-driven integral displaces the creation-side field alpha_sharp
    and the bbar_plus-driven one the alpha field.  History entries that the
    quadrature touches must be populated (not NaN); the turning-point nodes
    carry no vertex and are skipped.
    """
    n = grid.n_nodes
    if not (0 <= node < n):
        raise IndexError(f"node {node} out of range")
    P = grid.steps
    dt = grid.dt
    w = np.where(np.arange(n) <= P, dt, -dt)
    used = np.ones(n, dtype=bool)
    used[P] = used[P + 1] = False   # turning-point nodes carry no interaction vertex
    t = grid.times
    f_sharp = 0.0 + 0.0j
    f_alpha = 0.0 + 0.0j
    for p in range(n):
        if not used[p]:
            continue
        if p < node:
            b = bbar_nodes[p]
            if np.isnan(b):
                raise SequencingError(f"bbar at node {p} required by node {node} is unavailable")
            f_sharp += -1j * w[p] * b * G_scaled[node, p]
        elif p > node:
            bp_ = bbar_plus_nodes[p]
            if np.isnan(bp_):
                raise SequencingError(f"bbar_plus at node {p} required by node {node} is unavailable")
            f_alpha += -1j * w[p] * bp_ * G_scaled[p, node]
    return complex(f_alpha), complex(f_sharp)


@dataclass
class CoherentPair:
    """Displacement parameters of the two branch coherent states.

    b_minus parametrizes the backward bra as the dagger of a coherent ket, so
    the bra displacement itself is conj(b_minus).  log_overlap accumulates
    the branch-normalization combination; the separate normalizations are
    never needed once estimators are normalized by the overlap.
    """

    b_plus: complex
    b_minus: complex
    log_overlap: complex = 0.0 + 0.0j


@dataclass
class StatePair:
    """Truncated number-basis branch states.

    psi_minus stores the bra components <Psi_-|n>, so every contraction with
    the ket is a plain (conjugation-free) sum.
    """

    psi_plus: np.ndarray
    psi_minus: np.ndarray


@dataclass(frozen=True)
class StepNoise:
    """Total field values of one integration step (both branches)."""

    a_plus: complex | np.ndarray
    a_plus_sharp: complex | np.ndarray
    a_minus: complex | np.ndarray
    a_minus_sharp: complex | np.ndarray


def step_coherent(pair: CoherentPair, noise: StepNoise, epsilon: float, h: float,
                  dt: float) -> CoherentPair:
    """One explicit Euler step of both branch displacements.

    Forward: db+ = -i dt (epsilon b+ + h alpha+_sharp); the backward bra
    displacement m = conj(b-) follows the adjoint dm = +i dt (epsilon m +
    h alpha-).  The overlap log collects the two branch-normalization
    increments plus the change of the cross term m * b+.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    bp = pair.b_plus
    m = np.conj(pair.b_minus)
    bp_new = bp - 1j * dt * (epsilon * bp + h * noise.a_plus_sharp)
    m_new = m + 1j * dt * (epsilon * m + h * noise.a_minus)
    dlog = (-1j * h * dt * bp * noise.a_plus) \
        + (1j * h * dt * m * noise.a_minus_sharp) \
        + (m_new * bp_new - m * bp)
    return CoherentPair(b_plus=bp_new, b_minus=np.conj(m_new),
                        log_overlap=pair.log_overlap + dlog)


def _apply_b(psi: np.ndarray) -> np.ndarray:
    """(b psi)_n = sqrt(n+1) psi_{n+1}, arrays (..., d)."""
    d = psi.shape[-1]
    out = np.zeros_like(psi)
    root = np.sqrt(np.arange(1, d))
    out[..., :-1] = root * psi[..., 1:]
    return out


def _apply_bdag(psi: np.ndarray) -> np.ndarray:
    """(b^dag psi)_n = sqrt(n) psi_{n-1}."""
    d = psi.shape[-1]
    out = np.zeros_like(psi)
    root = np.sqrt(np.arange(1, d))
    out[..., 1:] = root * psi[..., :-1]
    return out


def coherent_amplitudes(b0: complex, n_max: int) -> np.ndarray:
    """Normalized coherent-state amplitudes in a dimension-n_max truncation."""
    if b0 == 0:
        amps = np.zeros(n_max, dtype=complex)
        amps[0] = 1.0
        return amps
    n = np.arange(n_max)
    log_fact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, n_max)))])
    return (np.exp(-0.5 * abs(b0) ** 2) * np.power(complex(b0), n)
            / np.exp(0.5 * log_fact)).astype(complex)


def step_general(pair: StatePair, noise: StepNoise, hq_diag: np.ndarray, h: float,
                 dt: float) -> StatePair:
    """One explicit Euler step of the truncated-Fock branch states.

    The forward ket sees -i dt (H_q + h(alpha+ b + alpha+_sharp b^dag)); the
    backward bra gains the +i dt transpose action.  States whose amplitude
    norm exceeds the divergence bound should be flagged by the caller.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    kp = pair.psi_plus
    km = pair.psi_minus
    dp = hq_diag * kp + h * (noise.a_plus * _apply_b(kp)
                             + noise.a_plus_sharp * _apply_bdag(kp))
    # transpose action: b^T = b^dag numerics, b^dag^T = b
    dm = hq_diag * km + h * (noise.a_minus * _apply_bdag(km)
                             + noise.a_minus_sharp * _apply_b(km))
    return StatePair(psi_plus=kp - 1j * dt * dp, psi_minus=km + 1j * dt * dm)


def overlap(pair) -> complex:
    """<Psi_-|Psi_+>; closed form for coherent pairs, contraction for states."""
    if isinstance(pair, CoherentPair):
        val = np.exp(pair.log_overlap)
    else:
        val = np.sum(pair.psi_minus * pair.psi_plus, axis=-1)
    if np.ndim(val) == 0 and abs(val) < 1e-300:
        raise FloatingPointError("degenerate overlap")
    return val


def mean_system_ops(pair) -> tuple:
    """Instantaneous means (bbar, bbar_plus) of the branch pair.

    Coherent pairs need no division: (b_plus, conj(b_minus)).  State pairs
    use the overlap-normalized contractions.
    """
    if isinstance(pair, CoherentPair):
        return pair.b_plus, np.conj(pair.b_minus)
    r = np.sum(pair.psi_minus * pair.psi_plus, axis=-1)
    if np.any(np.abs(r) < 1e-300):
        raise FloatingPointError("degenerate overlap in general mode")
    bbar = np.sum(pair.psi_minus * _apply_b(pair.psi_plus), axis=-1) / r
    bbar_plus = np.sum(pair.psi_minus * _apply_bdag(pair.psi_plus), axis=-1) / r
    return bbar, bbar_plus


class _NodeStats:
    """Per-time-node accumulators over trajectories, mergeable across chunks."""

    def __init__(self, n_nodes: int):
        self.count = np.zeros(n_nodes, dtype=np.int64)
        self.sum = np.zeros(n_nodes, dtype=complex)
        self.sum_re2 = np.zeros(n_nodes)
        self.sum_im2 = np.zeros(n_nodes)
        self.sum_lnr = np.zeros(n_nodes)
        self.sum_lnr2 = np.zeros(n_nodes)
        self.sum_r = np.zeros(n_nodes, dtype=complex)
        self.sum_r_re2 = np.zeros(n_nodes)

    def record(self, j: int, values: np.ndarray, lnr_re: np.ndarray,
               r: np.ndarray, valid: np.ndarray) -> None:
        v = values[valid]
        self.count[j] += v.size
        self.sum[j] += v.sum()
        self.sum_re2[j] += (v.real ** 2).sum()
        self.sum_im2[j] += (v.imag ** 2).sum()
        lv = lnr_re[valid]
        self.sum_lnr[j] += lv.sum()
        self.sum_lnr2[j] += (lv ** 2).sum()
        rv = r[valid]
        self.sum_r[j] += rv.sum()
        self.sum_r_re2[j] += (rv.real ** 2).sum()

    def merge(self, other: "_NodeStats") -> None:
        for name in ("count", "sum", "sum_re2", "sum_im2", "sum_lnr",
                     "sum_lnr2", "sum_r", "sum_r_re2"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def _mean_var(self, s, s2):
        n = np.maximum(self.count, 1)
        mean = s / n
        var = np.maximum(s2 / n - np.abs(mean) ** 2, 0.0)
        var *= n / np.maximum(n - 1, 1)
        return mean, var

    def summarize(self) -> dict:
        n = np.maximum(self.count, 1)
        mean = self.sum / n
        var_re = np.maximum(self.sum_re2 / n - mean.real ** 2, 0.0) * (n / np.maximum(n - 1, 1))
        var_im = np.maximum(self.sum_im2 / n - mean.imag ** 2, 0.0) * (n / np.maximum(n - 1, 1))
        lnr_mean = self.sum_lnr / n
        lnr_var = np.maximum(self.sum_lnr2 / n - lnr_mean ** 2, 0.0) * (n / np.maximum(n - 1, 1))
        r_mean = self.sum_r / n
        r_var = np.maximum(self.sum_r_re2 / n - r_mean.real ** 2, 0.0) * (n / np.maximum(n - 1, 1))
        return dict(count=self.count.copy(), mean=mean,
                    std_re=np.sqrt(var_re / n), std_im=np.sqrt(var_im / n),
                    var_re_sample=var_re,
                    lnr_mean=lnr_mean, lnr_var=lnr_var,
                    overlap_mean=r_mean, overlap_std=np.sqrt(r_var / n))


def _vacuum_mode_noise(chi: np.ndarray, omega: float, t: float) -> np.ndarray:
    """Vacuum fluctuation of the bath mode on the creation-side channel."""
    return np.exp(-1j * omega * t) * np.conj(chi)


def _coherent_chunk(cfg: OpenSystemConfig, chunk_id: int, size: int,
                    collect: bool = False):
    """Evolve one chunk of coherent-mode trajectories; returns _NodeStats."""
    grid = cfg.grid()
    P, dt = grid.steps, grid.dt
    eps, om, h = cfg.epsilon, cfg.omega, cfg.coupling
    midpoint = cfg.method == "midpoint"
    rng = RngStream(cfg.master_seed, chunk_id).generator()
    stats = _NodeStats(P + 1)
    collected = [] if collect else None

    if cfg.shift_enabled:
        chi = sample_gamma(1, rng, size=size)[:, 0]
        bp = np.full(size, cfg.b0, dtype=complex)
        bm = np.full(size, np.conj(cfg.b0), dtype=complex)    # bra displacement
        lnr = np.zeros(size, dtype=complex)
        Tm = np.zeros(size, dtype=complex)   # memory sum e^{-i om (t-s)} bbar(s)
        eiw = np.exp(-1j * om * dt)
        valid = np.ones(size, dtype=bool)
        for j in range(P + 1):
            r = np.exp(lnr)
            stats.record(j, bp, lnr.real, r, valid)
            if collect:
                collected.append((bp.copy(), r.copy()))
            if j == P:
                break
            t = j * dt
            z0 = _vacuum_mode_noise(chi, om, t)
            ash0 = z0 - 1j * h * dt * Tm       # creation-side channel at t
            if midpoint:
                z1 = _vacuum_mode_noise(chi, om, t + dt)
                k1 = -1j * (eps * bp + h * ash0)
                bp_pred = bp + dt * k1
                Tm_pred = eiw * Tm + 0.5 * (bp_pred + eiw * bp)
                ash1 = z1 - 1j * h * dt * Tm_pred
                k2 = -1j * (eps * bp_pred + h * ash1)
                bp_new = bp + 0.5 * dt * (k1 + k2)
                k1m = 1j * (eps * bm + h * np.conj(ash0))
                bm_pred = bm + dt * k1m
                k2m = 1j * (eps * bm_pred + h * np.conj(ash1))
                bm_new = bm + 0.5 * dt * (k1m + k2m)
                Tm = eiw * Tm + 0.5 * (bp_new + eiw * bp)
                ash_end = z1 - 1j * h * dt * Tm
                dOm_p = -1j * h * dt * 0.5 * (bp * np.conj(ash0) + bp_new * np.conj(ash_end))
                dOm_m = 1j * h * dt * 0.5 * (bm * ash0 + bm_new * ash_end)
                lnr = lnr + dOm_p + dOm_m + (bm_new * bp_new - bm * bp)
            else:
                bp_new = bp - 1j * dt * (eps * bp + h * ash0)
                bm_new = bm + 1j * dt * (eps * bm + h * np.conj(ash0))
                dOm_p = -1j * h * dt * bp * np.conj(ash0)
                dOm_m = 1j * h * dt * bm * ash0
                lnr = lnr + dOm_p + dOm_m + (bm_new * bp_new - bm * bp)
                Tm = eiw * (Tm + bp)     # strictly-earlier sum for the next step
            bp, bm = bp_new, bm_new
    else:
        sampler = BathModeSampler(grid, om)
        alpha, sharp = sampler.sample(rng, size)
        bp = np.full(size, cfg.b0, dtype=complex)
        bm = np.full(size, np.conj(cfg.b0), dtype=complex)
        lnr = np.zeros(size, dtype=complex)
        valid = np.ones(size, dtype=bool)
        for j in range(P + 1):
            valid &= lnr.real < _LOG_DIVERGENCE
            safe = np.where(valid, lnr, 0.0)
            r = np.exp(safe)
            est = bp * r
            stats.record(j, est, lnr.real, r, valid)
            if collect:
                collected.append((est.copy(), r.copy()))
            if j == P:
                break
            xp, xm = grid.forward_node(j), grid.backward_node(j)
            Ap, Apn = alpha[:, xp], sharp[:, xp]
            Am, Amn = alpha[:, xm], sharp[:, xm]
            lnr = lnr + 1j * h * dt * (bp * (Am - Ap) + bm * (Amn - Apn))
            bp = bp - 1j * dt * (eps * bp + h * Apn)
            bm = bm + 1j * dt * (eps * bm + h * Am)
    if collect:
        values = np.stack([c[0] for c in collected], axis=1)
        overlaps = np.stack([c[1] for c in collected], axis=1)
        return stats, values, overlaps
    return stats


def _fock_chunk(cfg: OpenSystemConfig, chunk_id: int, size: int, collect: bool = False):
    """Evolve one chunk of truncated-Fock trajectories; returns _NodeStats."""
    grid = cfg.grid()
    P, dt = grid.steps, grid.dt
    eps, om, h = cfg.epsilon, cfg.omega, cfg.coupling
    d = cfg.n_max
    hq = eps * np.arange(d)
    rng = RngStream(cfg.master_seed, chunk_id).generator()
    psi0 = coherent_amplitudes(cfg.b0, d)
    kp = np.tile(psi0, (size, 1))
    km = np.tile(psi0, (size, 1))       # bra components of <Psi_in|
    stats = _NodeStats(P + 1)
    collected = [] if collect else None
    valid = np.ones(size, dtype=bool)
    midpoint = cfg.method == "midpoint"

    if cfg.shift_enabled:
        chi = sample_gamma(1, rng, size=size)[:, 0]
        Tm = np.zeros(size, dtype=complex)
        eiw = np.exp(-1j * om * dt)
    else:
        sampler = BathModeSampler(grid, om)
        alpha, sharp = sampler.sample(rng, size)

    def rhs_ket(psi, A, Ash):
        return -1j * (hq * psi + h * (A[:, None] * _apply_b(psi)
                                      + Ash[:, None] * _apply_bdag(psi)))

    def rhs_bra(psi, A, Ash):
        return 1j * (hq * psi + h * (A[:, None] * _apply_bdag(psi)
                                     + Ash[:, None] * _apply_b(psi)))

    for j in range(P + 1):
        r = np.sum(km * kp, axis=-1)
        norms = np.maximum(np.abs(kp).max(axis=-1), np.abs(km).max(axis=-1))
        valid &= (norms < DIVERGENCE_BOUND) & (np.abs(r) > 1e-300)
        num = np.sum(km * _apply_b(kp), axis=-1)
        if cfg.shift_enabled:
            est = np.where(np.abs(r) > 1e-300, num / np.where(r == 0, 1, r), 0.0)
        else:
            est = num
        lnr_re = np.log(np.maximum(np.abs(r), 1e-300))
        stats.record(j, est, lnr_re, r, valid)
        if collect:
            collected.append((est.copy(), r.copy()))
        if j == P:
            break
        t = j * dt
        if cfg.shift_enabled:
            rr = np.where(np.abs(r) > 1e-300, r, 1.0)
            bbar = np.sum(km * _apply_b(kp), axis=-1) / rr
            z0 = _vacuum_mode_noise(chi, om, t)
            Ash0 = z0 - 1j * h * dt * Tm
            A0 = np.conj(Ash0)
            if midpoint:
                k1p = rhs_ket(kp, A0, Ash0)
                k1m = rhs_bra(km, A0, Ash0)
                kp_pred = kp + dt * k1p
                km_pred = km + dt * k1m
                r_pred = np.sum(km_pred * kp_pred, axis=-1)
                rr_pred = np.where(np.abs(r_pred) > 1e-300, r_pred, 1.0)
                bbar_pred = np.sum(km_pred * _apply_b(kp_pred), axis=-1) / rr_pred
                Tm_pred = eiw * Tm + 0.5 * (bbar_pred + eiw * bbar)
                z1 = _vacuum_mode_noise(chi, om, t + dt)
                Ash1 = z1 - 1j * h * dt * Tm_pred
                A1 = np.conj(Ash1)
                k2p = rhs_ket(kp_pred, A1, Ash1)
                k2m = rhs_bra(km_pred, A1, Ash1)
                kp = kp + 0.5 * dt * (k1p + k2p)
                km = km + 0.5 * dt * (k1m + k2m)
                r_new = np.sum(km * kp, axis=-1)
                rr_new = np.where(np.abs(r_new) > 1e-300, r_new, 1.0)
                bbar_new = np.sum(km * _apply_b(kp), axis=-1) / rr_new
                Tm = eiw * Tm + 0.5 * (bbar_new + eiw * bbar)
            else:
                kp = kp + dt * rhs_ket(kp, A0, Ash0)
                km = km + dt * rhs_bra(km, A0, Ash0)
                Tm = eiw * (Tm + bbar)
        else:
            xp, xm = grid.forward_node(j), grid.backward_node(j)
            Ap, Apn = alpha[:, xp], sharp[:, xp]
            Am, Amn = alpha[:, xm], sharp[:, xm]
            kp = kp + dt * rhs_ket(kp, Ap, Apn)
            km = km + dt * rhs_bra(km, Am, Amn)
    if collect:
        values = np.stack([c[0] for c in collected], axis=1)
        overlaps = np.stack([c[1] for c in collected], axis=1)
        return stats, values, overlaps
    return stats


def estimate_observable(values: np.ndarray, overlaps: np.ndarray,
                        normalized: bool) -> list[MCEstimate]:
    """Per-time-node estimates from materialized trajectory series.

    values holds <Psi_-|O|Psi_+> per (trajectory, node); normalized divides
    by the overlap (required when the noise shift is enabled).
    """
    if values.shape[0] < 2:
        raise ValueError("need at least 2 trajectories")
    data = values / overlaps if normalized else values
    out = []
    n = data.shape[0]
    for j in range(data.shape[1]):
        col = data[:, j]
        mean = col.mean()
        var = np.abs(col - mean).__pow__(2).sum() / (n - 1)
        out.append(MCEstimate(mean=complex(mean), std_of_mean=float(np.sqrt(var / n)),
                              n_samples=n))
    return out


def _chunk_layout(cfg: OpenSystemConfig) -> list[tuple[int, int]]:
    if cfg.mode == "fock":
        chunk = FOCK_CHUNK
    elif cfg.shift_enabled:
        chunk = COHERENT_CHUNK
    else:
        chunk = UNSHIFTED_COHERENT_CHUNK
    out = []
    done = 0
    cid = 0
    while done < cfg.n_samples:
        size = min(chunk, cfg.n_samples - done)
        out.append((cid, size))
        done += size
        cid += 1
    return out


def _run_chunk(args):
    cfg, chunk_id, size = args
    fn = _fock_chunk if cfg.mode == "fock" else _coherent_chunk
    return fn(cfg, chunk_id, size)


@dataclass
class OpenSystemResult:
    config: OpenSystemConfig
    times: np.ndarray
    rows: list = field(repr=False, default_factory=list)
    summary: dict = field(repr=False, default_factory=dict)
    divergent_total: int = 0


def run_opensystem(cfg: OpenSystemConfig, n_workers: int = 1) -> OpenSystemResult:
    """Full Monte Carlo run; one output row per forward time node."""
    from .parallel import chunked_map

    layout = _chunk_layout(cfg)
    parts = chunked_map(_run_chunk, [(cfg, cid, size) for cid, size in layout], n_workers)
    total = _NodeStats(cfg.steps + 1)
    for p in parts:
        total.merge(p)
    summary = total.summarize()
    times = np.arange(cfg.steps + 1) * (cfg.t_final / cfg.steps)
    divergent = int(cfg.n_samples - summary["count"].min())
    rows = []
    for j, t in enumerate(times):
        rows.append({
            "t": float(t),
            "re_b_mean": float(summary["mean"][j].real),
            "re_b_std": float(summary["std_re"][j]),
            "im_b_mean": float(summary["mean"][j].imag),
            "im_b_std": float(summary["std_im"][j]),
            "overlap_logvar": float(summary["lnr_var"][j]),
        })
    return OpenSystemResult(config=cfg, times=times, rows=rows, summary=summary,
                            divergent_total=divergent)


def collect_trajectories(cfg: OpenSystemConfig, n: int):
    """Materialized (values, overlaps) arrays for small diagnostic runs."""
    fn = _fock_chunk if cfg.mode == "fock" else _coherent_chunk
    _, values, overlaps = fn(cfg, 0, n, collect=True)
    return values, overlaps


def exact_mean_b(times: np.ndarray, epsilon: float, omega: float, coupling: float,
                 b0: complex = 1.0) -> np.ndarray:
    """Closed two-oscillator solution of <b(t)> for the coupled-mode model."""
    M = np.array([[epsilon, coupling], [coupling, omega]], dtype=complex)
    w, Q = np.linalg.eigh(M)
    v0 = np.array([b0, 0.0], dtype=complex)
    coeff = Q.conj().T @ v0
    return np.array([(Q @ (np.exp(-1j * w * t) * coeff))[0] for t in np.atleast_1d(times)])
