"""Sign-problem-free Gaussian quasitrajectory Monte Carlo engine."""

from .contour import ContourGrid, bath_green_single_mode, build_contour, contour_later
from .factorization import (Factorization, SymmetricFactorization, factorize_svd,
                            factorize_takagi)
from .pdc import DoubledCovariance, pdc_contour_covariance, pdc_doubled_covariance
from .sampling import QuasiTrajectory, RngStream, sample_doubled, sample_gamma, \
    sample_quasitrajectory
from .stats import MCEstimate, RunningStat, mc_mean
from .wick import wick_moment

__all__ = [
    "ContourGrid", "bath_green_single_mode", "build_contour", "contour_later",
    "Factorization", "SymmetricFactorization", "factorize_svd", "factorize_takagi",
    "DoubledCovariance", "pdc_contour_covariance", "pdc_doubled_covariance",
    "QuasiTrajectory", "RngStream", "sample_doubled", "sample_gamma",
    "sample_quasitrajectory", "MCEstimate", "RunningStat", "mc_mean", "wick_moment",
]

__version__ = "0.1.0"
