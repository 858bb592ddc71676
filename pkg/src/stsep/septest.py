"""
The separability tests: time-permutation envelope and deviation tests, and
the chi-square test on quantile cells.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .envelope import EnvelopeResult, deviation_pvalue, envelope_test
from .geometry import Grid3, PointPattern, build_grid
from .kernels import Bandwidths, estimate_intensity, resolve_bandwidths
from .stats import STATISTICS, StatisticMap

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PermTestConfig:
    """
    Settings of a Monte Carlo separability test.

    ``statistic`` is one of ``S``, ``Sspace``, ``Stime``, ``Sd``. Bandwidths
    left as None are selected from the data with ``bw_method``.
    """

    n_perm: int = 1999
    statistic: str = "S"
    grid: tuple[int, int, int] = (25, 25, 20)
    epsilon: float | None = None
    delta: float | None = None
    bw_method: str = "rule-of-thumb"
    alpha: float = 0.05
    seed: int = 0
    chunk: int = 64

    def __post_init__(self):
        if self.n_perm < 19:
            raise ValueError("n_perm must be at least 19")
        if self.alpha * (self.n_perm + 1) < 1 - 1e-9:
            raise ValueError("insufficient replicates for level")
        if self.statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}")

    def bandwidths(self, pattern: PointPattern) -> Bandwidths:
        return resolve_bandwidths(pattern, self.epsilon, self.delta, self.bw_method)


@dataclass(frozen=True, eq=False)
class TestResult:
    """Outcome of one Monte Carlo test on one statistic."""

    statistic: str
    p_value: float
    alpha: float
    n_replicates: int
    seed: int
    grid: tuple[int, int, int]
    bandwidths: Bandwidths
    envelope: EnvelopeResult | None = None
    values: np.ndarray | None = None  # data row; the S_d values of all samples for Sd
    index: np.ndarray | None = field(default=None, repr=False)
    method: str = "permutation"

    __test__ = False  # not a pytest class

    @property
    def reject(self) -> bool:
        return self.p_value <= self.alpha


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` regardless of scheduling."""
    return np.random.default_rng([int(seed), int(index)])


def permute_times(pattern: PointPattern, rng: np.random.Generator) -> PointPattern:
    """Reassign the observed times to the fixed locations uniformly at random."""
    if pattern.n < 2:
        return pattern
    return pattern.with_times(pattern.t[rng.permutation(pattern.n)])


def _summarise(stat, samples, cfg, bw, smap, method, seed=None):
    seed = cfg.seed if seed is None else seed
    if stat == "Sd":
        return TestResult(
            stat, deviation_pvalue(samples), cfg.alpha, len(samples) - 1, seed, tuple(cfg.grid), bw,
            values=np.asarray(samples), method=method,
        )
    env = envelope_test(samples, cfg.alpha)
    idx = {"S": smap.index, "Sspace": smap.space_ids, "Stime": smap.time_ids}[stat]
    return TestResult(
        stat, env.p_value, cfg.alpha, samples.shape[0] - 1, seed, tuple(cfg.grid), bw,
        envelope=env, values=env.data, index=idx, method=method,
    )


def permutation_samples(pattern: PointPattern, cfg: PermTestConfig, statistics: Sequence[str], grid: Grid3 | None = None):
    """
    Data and permutation values of the requested statistics.

    Returns
    -------
    samples : dict tag -> (n_perm + 1, d) array, row 0 the data
    smap : StatisticMap
    bw : Bandwidths
    """
    bw = cfg.bandwidths(pattern)
    if grid is None:
        grid = build_grid(pattern.window, *cfg.grid)
    fld = estimate_intensity(pattern, bw, grid)
    w = fld.weights
    smap = StatisticMap(fld)
    sep = fld.rho_sep.ravel()
    rows = {st: [v] for st, v in smap.evaluate(fld.rho_st, sep, statistics).items()}

    # rho_space and rho_time are invariant under time permutation, so the
    # separable estimate and the mask stay those of the data
    for lo in range(1, cfg.n_perm + 1, cfg.chunk):
        hi = min(lo + cfg.chunk, cfg.n_perm + 1)
        block = np.empty((hi - lo, grid.nx * grid.ny * grid.nt))
        for r, i in enumerate(range(lo, hi)):
            order = replicate_rng(cfg.seed, i).permutation(pattern.n)
            block[r] = (w.space @ w.time[:, order].T).ravel()
        for st, v in smap.evaluate(block, sep, statistics).items():
            rows[st].append(v)
    samples = {st: np.concatenate(v) if st == "Sd" else np.vstack(v) for st, v in rows.items()}
    return samples, smap, bw


def run_permutation_tests(pattern: PointPattern, cfg: PermTestConfig, statistics: Sequence[str] = STATISTICS) -> dict:
    """Run several statistics on one shared set of permutations."""
    samples, smap, bw = permutation_samples(pattern, cfg, statistics)
    return {st: _summarise(st, samples[st], cfg, bw, smap, "permutation") for st in statistics}


def run_permutation_test(pattern: PointPattern, cfg: PermTestConfig) -> TestResult:
    """
    Time-permutation Monte Carlo test of first-order separability.

    The statistic is computed on the data and on ``cfg.n_perm`` patterns
    with permuted times, all with the data's bandwidths, grid and mask. An
    ERL envelope test is applied for S, S_space and S_time; a one-sided
    deviation test for S_d.
    """
    return run_permutation_tests(pattern, cfg, (cfg.statistic,))[cfg.statistic]


def pattern_statistics(pattern: PointPattern, bw: Bandwidths, smap: StatisticMap, statistics) -> dict:
    """Statistics of a replicate pattern estimated on its own, on the data's mask."""
    fld = estimate_intensity(pattern, bw, smap.grid)
    return smap.evaluate(fld.rho_st, fld.rho_sep, statistics)


def replicate_test(pattern: PointPattern, replicates: Sequence[PointPattern], cfg: PermTestConfig, statistics=None, method="replicates") -> dict:
    """
    Monte Carlo test against arbitrary null replicates.

    Each replicate gets its own intensity estimates with the data's
    bandwidths and the data's mask.
    """
    statistics = (cfg.statistic,) if statistics is None else tuple(statistics)
    bw = cfg.bandwidths(pattern)
    grid = build_grid(pattern.window, *cfg.grid)
    fld = estimate_intensity(pattern, bw, grid)
    smap = StatisticMap(fld)
    rows = {st: [v] for st, v in smap.evaluate(fld.rho_st, fld.rho_sep, statistics).items()}
    for rep in replicates:
        for st, v in pattern_statistics(rep, bw, smap, statistics).items():
            rows[st].append(v)
    out = {}
    for st, v in rows.items():
        arr = np.concatenate(v) if st == "Sd" else np.vstack(v)
        out[st] = _summarise(st, arr, cfg, bw, smap, method)
    return out


# ---------------------------------------------------------------------------
# chi-square test


@dataclass(frozen=True, eq=False)
class ChiSqResult:
    counts: np.ndarray  # (I, J)
    expected: np.ndarray
    statistic: float
    df: int
    p_value: float
    boundaries: tuple = ()

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def chisq_tail(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution, Q(df/2, x/2)."""
    if not np.isfinite(x):
        raise ValueError("chi-square statistic must be finite")
    if x < 0 or df < 1:
        raise ValueError("need x >= 0 and df >= 1")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def quantile_partition(values, k: int) -> np.ndarray:
    """
    Cell boundaries at the j/k sample quantiles, outermost at +-inf.

    Quantiles interpolate linearly between order statistics at position
    (n + 1) p. Cells are (b_{j-1}, b_j], so ties go to the lower cell.
    """
    v = np.asarray(values, dtype=float)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        return np.array([-np.inf, np.inf])
    if v.size < k or np.unique(v).size < k:
        raise ValueError("degenerate partition")
    inner = np.quantile(v, np.arange(1, k) / k, method="weibull")
    if np.any(np.diff(inner) <= 0):
        raise ValueError("degenerate partition")
    return np.concatenate([[-np.inf], inner, [np.inf]])


def assign_cells(values, boundaries) -> np.ndarray:
    """Cell index of each value; a value equal to a boundary goes below it."""
    return np.searchsorted(boundaries[1:-1], np.asarray(values, dtype=float), side="left")


def chisq_from_counts(counts) -> ChiSqResult:
    """Pearson statistic for independence in an I x J table of counts."""
    n_ij = np.asarray(counts, dtype=float)
    n = n_ij.sum()
    row = n_ij.sum(axis=1, keepdims=True)
    col = n_ij.sum(axis=0, keepdims=True)
    e_ij = row * col / n
    if np.any(e_ij == 0):
        raise ValueError("empty margin")
    if np.mean(e_ij < 5) > 0.2:
        warnings.warn("more than 20% of expected cell counts are below five", RuntimeWarning, stacklevel=2)
    stat = float(np.sum((n_ij - e_ij) ** 2 / e_ij))
    df = (n_ij.shape[0] - 1) * (n_ij.shape[1] - 1)
    if df < 1:
        raise ValueError("need at least two spatial and two temporal cells")
    return ChiSqResult(n_ij.astype(int), e_ij, stat, df, chisq_tail(stat, df))


def chisq_test(pattern: PointPattern, kx: int = 4, ky: int = 4, kt: int = 4) -> ChiSqResult:
    """
    Chi-square test of first-order separability.

    Spatial cells are products of x- and y-quantile intervals (I = kx ky),
    temporal cells are t-quantile intervals (J = kt).
    """
    bx = quantile_partition(pattern.x, kx)
    by = quantile_partition(pattern.y, ky)
    bt = quantile_partition(pattern.t, kt)
    i = assign_cells(pattern.x, bx) * ky + assign_cells(pattern.y, by)
    j = assign_cells(pattern.t, bt)
    counts = np.zeros((kx * ky, kt), dtype=int)
    np.add.at(counts, (i, j), 1)
    res = chisq_from_counts(counts)
    return ChiSqResult(res.counts, res.expected, res.statistic, res.df, res.p_value, (bx, by, bt))
