"""
First-order separability tests for spatio-temporal point patterns.

Kernel intensity estimation, time-permutation global envelope tests, a
chi-square test on quantile cells and Monte Carlo tests built on stochastic
reconstruction, plus the simulators used to study their level and power.
"""

__version__ = "0.1.0"

from .envelope import EnvelopeResult, envelope_test, erl_measures, global_envelope, pointwise_ranks
from .geometry import Grid3, PointPattern, Window, build_grid, point_in_window
from .kernels import Bandwidths, IntensityField, estimate_intensity, resolve_bandwidths
from .recon import ReconConfig, reconstruct, run_reconstruction_test
from .septest import PermTestConfig, TestResult, chisq_test, permute_times, run_permutation_test
from .stats import compute_S, compute_S_d, compute_S_space, compute_S_time

__all__ = [
    "Bandwidths",
    "EnvelopeResult",
    "Grid3",
    "IntensityField",
    "PermTestConfig",
    "PointPattern",
    "ReconConfig",
    "TestResult",
    "Window",
    "build_grid",
    "chisq_test",
    "compute_S",
    "compute_S_d",
    "compute_S_space",
    "compute_S_time",
    "envelope_test",
    "erl_measures",
    "estimate_intensity",
    "global_envelope",
    "permute_times",
    "point_in_window",
    "pointwise_ranks",
    "reconstruct",
    "resolve_bandwidths",
    "run_permutation_test",
    "run_reconstruction_test",
]
