"""Exact Gaussian moments by perfect-pairing enumeration.

For a zero-mean jointly Gaussian field vector Phi with symmetric covariance
C = E[Phi Phi^T], the expectation of any product of components is the sum
over perfect pairings of products of covariance entries.  This is the exact
reference against which every Monte Carlo estimate in the suite is checked.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

MAX_MONOMIAL_LEN = 12


def wick_moment(C: np.ndarray, monomial: Sequence[int]) -> complex:
    """E[Phi_{i1} ... Phi_{ik}] for the Gaussian with E[Phi Phi^T] = C.

    Odd-length monomials vanish.  The pairing count is (k-1)!!, so the length
    is capped at MAX_MONOMIAL_LEN.
    """
    idx = list(monomial)
    k = len(idx)
    if k > MAX_MONOMIAL_LEN:
        raise ValueError(f"monomial length {k} exceeds supported maximum {MAX_MONOMIAL_LEN}")
    if k % 2 == 1:
        return 0.0 + 0.0j
    if k == 0:
        return 1.0 + 0.0j
    C = np.asarray(C)

    def pairings(indices: tuple[int, ...]) -> complex:
        if not indices:
            return 1.0 + 0.0j
        first, rest = indices[0], indices[1:]
        total = 0.0 + 0.0j
        for j in range(len(rest)):
            total += C[first, rest[j]] * pairings(rest[:j] + rest[j + 1:])
        return total

    return complex(pairings(tuple(idx)))


def moment_of_linear_forms(C: np.ndarray, forms: Sequence[Sequence[tuple[int, complex]]]) -> complex:
    """Exact expectation of a product of linear combinations of Phi components.

    Each form is a list of (component_index, coefficient) pairs.  Expands
    multilinearly and sums wick_moment over the index tuples.
    """
    total = 0.0 + 0.0j

    def expand(pos: int, idx: list[int], coeff: complex) -> None:
        nonlocal total
        if pos == len(forms):
            total += coeff * wick_moment(C, idx)
            return
        for comp, c in forms[pos]:
            if c != 0:
                idx.append(comp)
                expand(pos + 1, idx, coeff * c)
                idx.pop()

    expand(0, [], 1.0 + 0.0j)
    return total
