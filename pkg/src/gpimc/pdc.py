"""Equal-time covariances of the four-mode parametric down-conversion state.

The source process is two independent two-mode squeezers pumping the
polarization pairs (a1, b1) and (a2, b2).  After evolving the vacuum for a
time t at coupling kappa, with r = kappa*t:

    <a_i^dag a_j> = delta_ij sinh^2(r)                  (all four modes)
    <a1 b1> = <a2 b2> = sinh(r) cosh(r)                 (only cross-wing pairs)

Both values are certified against a truncated-Fock propagation oracle in the
test suite rather than taken from the closed form alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("a1", "a2", "b1", "b2")
N_MODES = 4
_SQUEEZED_PAIRS = ((0, 2), (1, 3))


@dataclass(frozen=True)
class DoubledCovariance:
    """Complex symmetric covariance of Phi = (alpha_1..alpha_M, alpha_sharp_1..alpha_sharp_M).

    The alpha fields stand for annihilators, the sharp fields for creators;
    the <alpha_sharp alpha> block holds normal-ordered pair moments and the
    diagonal blocks hold the anomalous <aa> / <a^dag a^dag> moments.
    """

    mode_count: int
    entries: np.ndarray

    def __post_init__(self):
        n = 2 * self.mode_count
        if self.entries.shape != (n, n):
            raise ValueError("entries must be 2M x 2M")
        asym = np.abs(self.entries - self.entries.T).max() if n else 0.0
        if asym > 1e-12 * max(1.0, np.abs(self.entries).max() if n else 1.0):
            raise ValueError("doubled covariance must be symmetric")

    def alpha_index(self, k: int) -> int:
        return k

    def sharp_index(self, k: int) -> int:
        return self.mode_count + k


def pdc_doubled_covariance(kappa: float, t: float) -> DoubledCovariance:
    """Normal-ordered equal-time covariance of the PDC state; zero at t = 0."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    r = kappa * t
    nu = np.sinh(r) ** 2
    mu = np.sinh(r) * np.cosh(r)
    M = N_MODES
    C = np.zeros((2 * M, 2 * M), dtype=complex)
    for k in range(M):
        C[k, M + k] = C[M + k, k] = nu
    for (i, j) in _SQUEEZED_PAIRS:
        C[i, j] = C[j, i] = mu
        C[M + i, M + j] = C[M + j, M + i] = mu
    return DoubledCovariance(mode_count=M, entries=C)


def pdc_contour_covariance(kappa: float, t: float) -> np.ndarray:
    """Two-branch equal-time contour covariance of the PDC fields.

    Field order: (alpha(+), alpha_sharp(+), alpha(-), alpha_sharp(-)), four
    modes each, 16 fields total.  Pairings in which the annihilation-side
    field sits contour-later-or-equal pick up the vacuum delta on top of the
    normal-ordered moment; the (alpha(+), alpha_sharp(-)) pairing is the
    purely normal-ordered one used by the intensity estimators.  Sampling
    this covariance gives estimators whose fluctuations stay at the vacuum
    scale, which is what makes intensity correlations expensive to resolve
    as kappa*t -> 0.
    """
    C8 = pdc_doubled_covariance(kappa, t).entries
    M = N_MODES
    nu_blk = C8[0:M, M:2 * M]
    an = C8[0:M, 0:M]
    an_dag = C8[M:2 * M, M:2 * M]
    I = np.eye(M)
    C = np.zeros((16, 16), dtype=complex)
    A_p, N_p, A_m, N_m = (slice(0, 4), slice(4, 8), slice(8, 12), slice(12, 16))
    for s1 in (A_p, A_m):
        for s2 in (A_p, A_m):
            C[s1, s2] = an
    for s1 in (N_p, N_m):
        for s2 in (N_p, N_m):
            C[s1, s2] = an_dag
    dressed = nu_blk + I
    # same-node pairs and the annihilator-later cross pair carry the vacuum term
    for (sa, sn) in ((A_p, N_p), (A_m, N_m), (A_m, N_p)):
        C[sa, sn] = dressed
        C[sn, sa] = dressed
    C[A_p, N_m] = nu_blk
    C[N_m, A_p] = nu_blk
    return C
