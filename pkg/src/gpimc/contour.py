"""Discretized two-branch (Keldysh-style) time contours and bath Green matrices.

The contour runs forward from 0 to t_final and back to 0.  Nodes are indexed
l = 0..2P+1: l <= P lies on the forward branch at time l*dt, l >= P+1 on the
backward branch at time (2P+1-l)*dt, so node order coincides with contour
order and the turning point carries two nodes at t_final.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FORWARD = +1
BACKWARD = -1


@dataclass(frozen=True)
class ContourGrid:
    """Node layout of a discretized forward/backward contour."""

    t_final: float
    steps: int
    times: np.ndarray = field(repr=False)
    branches: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return self.t_final / self.steps

    @property
    def n_nodes(self) -> int:
        return 2 * self.steps + 2

    def forward_node(self, j: int) -> int:
        """Node index of the forward branch at time j*dt."""
        return j

    def backward_node(self, j: int) -> int:
        """Node index of the backward branch at time j*dt."""
        return 2 * self.steps + 1 - j


def build_contour(t_final: float, steps: int) -> ContourGrid:
    """Build the 2P+2 node contour for a run of duration t_final with P steps."""
    if not (t_final > 0.0):
        raise ValueError(f"t_final must be positive, got {t_final}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    P = int(steps)
    dt = t_final / P
    fw = np.arange(P + 1) * dt
    bw = (2 * P + 1 - np.arange(P + 1, 2 * P + 2)) * dt
    times = np.concatenate([fw, bw])
    branches = np.concatenate([np.full(P + 1, FORWARD), np.full(P + 1, BACKWARD)])
    return ContourGrid(t_final=float(t_final), steps=P, times=times, branches=branches)


def contour_later(grid: ContourGrid, l1: int, l2: int) -> bool:
    """True iff node l1 lies strictly later than l2 along the contour."""
    n = grid.n_nodes
    for l in (l1, l2):
        if not (0 <= l < n):
            raise IndexError(f"node index {l} out of range 0..{n - 1}")
    return l1 > l2


def bath_green_single_mode(grid: ContourGrid, omega: float) -> np.ndarray:
    """Contour-ordered vacuum pair correlation of one harmonic mode.

    Entry (l, p) is exp(-i*omega*(t_l - t_p)) when l is contour-later than or
    equal to p, and 0 otherwise; the equal-node diagonal takes the value 1
    (annihilator-later ordering of the equal-time pair).
    """
    t = grid.times
    l = np.arange(grid.n_nodes)
    later_or_equal = l[:, None] >= l[None, :]
    phase = np.exp(-1j * omega * (t[:, None] - t[None, :]))
    return np.where(later_or_equal, phase, 0.0 + 0.0j)
