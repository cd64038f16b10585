"""Sampling square roots of Green matrices and doubled covariances.

A Factorization splits a complex matrix G as U @ W; quasitrajectories are then
drawn as alpha = W.T @ gamma, alpha_sharp = U @ conj(gamma) with standard
complex normals gamma, which reproduces E[alpha_sharp (x) alpha^T] = G.
A SymmetricFactorization provides L with L @ L.T = C for a complex symmetric
covariance C, sampled with real normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-12


@dataclass(frozen=True)
class Factorization:
    """Pair (U, W) with U @ W reconstructing the source matrix."""

    U: np.ndarray
    W: np.ndarray
    rank_tol: float

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.W

    def residual(self, G: np.ndarray) -> float:
        """Frobenius residual relative to max(1, ||G||_F)."""
        num = np.linalg.norm(self.reconstruct() - G)
        return float(num / max(1.0, np.linalg.norm(G)))


@dataclass(frozen=True)
class SymmetricFactorization:
    """L with L @ L.T equal to the source complex symmetric covariance."""

    L: np.ndarray
    rank_tol: float

    @property
    def rank(self) -> int:
        return self.L.shape[1]

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.L @ self.L.T

    def residual(self, C: np.ndarray) -> float:
        num = np.linalg.norm(self.reconstruct() - C)
        return float(num / max(1.0, np.linalg.norm(C)))


def factorize_svd(G: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> Factorization:
    """Split G = U @ W via SVD, with U = U_s sqrt(S) and W = sqrt(S) V_s^H.

    Singular values below rank_tol * sigma_max are dropped.
    """
    G = np.asarray(G, dtype=complex)
    if not np.all(np.isfinite(G)):
        raise ValueError("factorize_svd requires finite entries")
    u, s, vh = np.linalg.svd(G)
    smax = s[0] if s.size else 0.0
    keep = s > rank_tol * smax
    root = np.sqrt(s[keep])
    U = u[:, keep] * root[None, :]
    W = root[:, None] * vh[keep, :]
    return Factorization(U=U, W=W, rank_tol=rank_tol)


def factorize_takagi(C: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> SymmetricFactorization:
    """Takagi/Autonne square root L @ L.T = C of a complex symmetric matrix.

    Uses the con-eigenvalue reduction: for C = A + iB the real symmetric
    block matrix [[A, B], [B, -A]] has eigenpairs (s, (x; y)) with s >= 0 and
    C conj(v) = s v for v = x + iy, so C = V diag(s) V^T over the positive
    eigenvalues and L = V sqrt(diag(s)).  Robust under degenerate singular
    values, unlike square roots of grouped unitary blocks.
    """
    C = np.asarray(C, dtype=complex)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("covariance must be square")
    if n == 0:
        return SymmetricFactorization(L=np.zeros((0, 0), dtype=complex), rank_tol=rank_tol)
    asym = np.abs(C - C.T).max()
    scale = max(1.0, np.abs(C).max())
    if asym > 1e-10 * scale:
        raise ValueError(f"covariance not symmetric: max |C - C^T| = {asym:.3e}")
    C = 0.5 * (C + C.T)
    A, B = C.real, C.imag
    M = np.block([[A, B], [B, -A]])
    lam, Wv = np.linalg.eigh(M)
    order = np.argsort(lam)[::-1]
    lam, Wv = lam[order], Wv[:, order]
    smax = lam[0] if lam.size else 0.0
    keep = lam > max(rank_tol * max(smax, 0.0), 0.0)
    V = Wv[:n, keep] + 1j * Wv[n:, keep]
    L = V * np.sqrt(lam[keep])[None, :]
    return SymmetricFactorization(L=L, rank_tol=rank_tol)
