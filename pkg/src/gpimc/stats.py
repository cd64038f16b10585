"""Single-pass, mergeable Monte Carlo accumulators and ratio error propagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MCEstimate:
    """Mean, standard deviation of the mean, and sample count."""

    mean: complex
    std_of_mean: float
    n_samples: int

    @property
    def re(self) -> float:
        return float(np.real(self.mean))

    @property
    def im(self) -> float:
        return float(np.imag(self.mean))


class RunningStat:
    """Welford accumulator for a complex-valued sample stream.

    The spread is the total variance E|x - mean|^2; merging two accumulators
    is exact (Chan parallel update), so chunked evaluation reproduces the
    single-stream result up to roundoff.
    """

    __slots__ = ("n", "mean", "m2")

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0 + 0.0j
        self.m2 = 0.0

    def add(self, x: complex) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += (np.conj(d) * (x - self.mean)).real

    def add_batch(self, xs: np.ndarray) -> None:
        xs = np.asarray(xs)
        k = xs.size
        if k == 0:
            return
        other = RunningStat()
        other.n = k
        other.mean = complex(xs.mean())
        other.m2 = float(np.abs(xs - other.mean).__pow__(2).sum())
        self.merge(other)

    def merge(self, other: "RunningStat") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * (other.n / n)
        self.m2 += other.m2 + (abs(d) ** 2) * self.n * other.n / n
        self.n = n

    def estimate(self) -> MCEstimate:
        if self.n < 2:
            raise ValueError("standard error undefined for fewer than 2 samples")
        var = self.m2 / (self.n - 1)
        return MCEstimate(mean=self.mean, std_of_mean=float(np.sqrt(var / self.n)), n_samples=self.n)


class PairStat:
    """Mergeable accumulator of means, variances, and covariance of two real streams."""

    __slots__ = ("n", "mx", "my", "sxx", "syy", "sxy")

    def __init__(self) -> None:
        self.n = 0
        self.mx = self.my = 0.0
        self.sxx = self.syy = self.sxy = 0.0

    def add_batch(self, xs: np.ndarray, ys: np.ndarray) -> None:
        k = xs.size
        if k == 0:
            return
        other = PairStat()
        other.n = k
        other.mx = float(xs.mean())
        other.my = float(ys.mean())
        dx = xs - other.mx
        dy = ys - other.my
        other.sxx = float(dx @ dx)
        other.syy = float(dy @ dy)
        other.sxy = float(dx @ dy)
        self.merge(other)

    def merge(self, other: "PairStat") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mx, self.my = other.n, other.mx, other.my
            self.sxx, self.syy, self.sxy = other.sxx, other.syy, other.sxy
            return
        n = self.n + other.n
        dx = other.mx - self.mx
        dy = other.my - self.my
        w = self.n * other.n / n
        self.sxx += other.sxx + dx * dx * w
        self.syy += other.syy + dy * dy * w
        self.sxy += other.sxy + dx * dy * w
        self.mx += dx * (other.n / n)
        self.my += dy * (other.n / n)
        self.n = n


def mc_mean(samples) -> MCEstimate:
    """Estimate mean and standard error of a finite sample stream."""
    acc = RunningStat()
    arr = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples)
    acc.add_batch(arr)
    return acc.estimate()


@dataclass(frozen=True)
class RatioEstimate:
    """First-order ratio mean(x)/mean(y) with propagated error.

    degenerate is set when the denominator is statistically consistent with
    zero (|mean| <= 2 standard errors); the band is then infinite.
    """

    value: complex
    std: float
    degenerate: bool
    n_samples: int


def ratio_estimate(pair: PairStat) -> RatioEstimate:
    """Delta-method ratio of two correlated real sample streams."""
    if pair.n < 2:
        raise ValueError("ratio undefined for fewer than 2 samples")
    n = pair.n
    vx = pair.sxx / (n - 1)
    vy = pair.syy / (n - 1)
    cxy = pair.sxy / (n - 1)
    den_std = np.sqrt(vy / n)
    if abs(pair.my) <= 2.0 * den_std:
        return RatioEstimate(value=np.inf if pair.my == 0 else pair.mx / pair.my,
                             std=np.inf, degenerate=True, n_samples=n)
    r = pair.mx / pair.my
    var = (vx + r * r * vy - 2.0 * r * cxy) / (pair.my * pair.my * n)
    return RatioEstimate(value=r, std=float(np.sqrt(max(var, 0.0))), degenerate=False, n_samples=n)
