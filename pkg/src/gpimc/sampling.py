"""Counter-based RNG streams and quasitrajectory samplers.

Streams are keyed by (master_seed, stream_index) through Philox, so any
trajectory's draws are reproducible bit-exactly regardless of which worker
evaluates it or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factorization import Factorization, SymmetricFactorization


@dataclass(frozen=True)
class RngStream:
    """Independent, reproducible random stream for one trajectory or chunk."""

    master_seed: int
    stream_index: int

    def generator(self) -> np.random.Generator:
        key = (int(self.master_seed) & 0xFFFFFFFFFFFFFFFF) | (int(self.stream_index) << 64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass
class QuasiTrajectory:
    """Sampled field pair; alpha and alpha_sharp are not complex conjugates."""

    alpha: np.ndarray
    alpha_sharp: np.ndarray

    @property
    def n_fields(self) -> int:
        return self.alpha.shape[-1]


def sample_gamma(m: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Standard complex normals gamma = (x + i y)/sqrt(2), E[conj(g) g] = 1.

    Returns shape (m,) or (size, m).
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    shape = (m,) if size is None else (size, m)
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    return (x + 1j * y) / np.sqrt(2.0)


def sample_quasitrajectory(f: Factorization, rng: np.random.Generator,
                           size: int | None = None) -> QuasiTrajectory:
    """Draw alpha = W^T gamma, alpha_sharp = U conj(gamma) for fresh gamma."""
    g = sample_gamma(f.rank, rng, size=size)
    alpha = g @ np.ascontiguousarray(f.W) if size is not None else f.W.T @ g
    sharp = np.conj(g) @ f.U.T if size is not None else f.U @ np.conj(g)
    return QuasiTrajectory(alpha=alpha, alpha_sharp=sharp)


def sample_doubled(f: SymmetricFactorization, rng: np.random.Generator,
                   size: int | None = None) -> QuasiTrajectory:
    """Draw Phi = L eta with real standard normals eta, so E[Phi Phi^T] = C.

    The doubled field vector Phi = (alpha_1..alpha_M, alpha_sharp_1..alpha_sharp_M)
    is split back into its two halves.
    """
    m = f.rank
    shape = (m,) if size is None else (size, m)
    eta = rng.standard_normal(shape)
    phi = eta @ f.L.T if size is not None else f.L @ eta
    M = f.n // 2
    return QuasiTrajectory(alpha=phi[..., :M], alpha_sharp=phi[..., M:])
