"""
Global extreme rank length (ERL) envelopes and Monte Carlo p-values.

Row 0 of every stacked sample matrix is the data; rows 1..n are the null
replicates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "RankMatrix",
    "EnvelopeResult",
    "pointwise_ranks",
    "erl_measures",
    "global_envelope",
    "mc_pvalue",
    "deviation_pvalue",
    "envelope_test",
]


@dataclass(frozen=True, eq=False)
class RankMatrix:
    ranks: np.ndarray  # (n+1, d) two-sided pointwise ranks
    sorted_ranks: np.ndarray  # each row ascending


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    low: np.ndarray
    upp: np.ndarray
    measures: np.ndarray
    p_value: float
    alpha: float
    above: np.ndarray
    below: np.ndarray
    data: np.ndarray

    @property
    def reject(self) -> bool:
        return self.p_value <= self.alpha

    @property
    def exit_codes(self) -> np.ndarray:
        """-1 below the envelope, +1 above, 0 inside."""
        return self.above.astype(int) - self.below.astype(int)


def _as_samples(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        rows = [np.ravel(r) for r in samples]
        if len({len(r) for r in rows}) > 1:
            raise ValueError("ragged input: samples differ in length")
        arr = np.array(rows)
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("samples must be a 2-d array (n+1, d)")
    if arr.shape[0] < 2:
        raise ValueError("need the data and at least one replicate")
    return arr


def pointwise_ranks(samples) -> RankMatrix:
    """
    Two-sided pointwise ranks.

    ``R_ij = min(#{i': S_i'j <= S_ij}, #{i': S_i'j >= S_ij})``, so the
    smallest and the largest value in a column both get rank 1.
    """
    s = _as_samples(samples)
    below = rankdata(s, method="max", axis=0)
    above = rankdata(-s, method="max", axis=0)
    r = np.minimum(below, above).astype(np.int64)
    return RankMatrix(r, np.sort(r, axis=1))


def erl_measures(rm: RankMatrix) -> np.ndarray:
    """
    ERL measures ``M_i = #{i': R_i' < R_i lexicographically} / (n+1)``.

    Small values are extreme; identical sorted rank vectors share a measure.
    """
    r = rm.sorted_ranks
    s = r.shape[0]
    # np.lexsort treats the last key as primary
    order = np.lexsort(r.T[::-1])
    rs = r[order]
    new_group = np.ones(s, dtype=bool)
    new_group[1:] = np.any(rs[1:] != rs[:-1], axis=1)
    first = np.maximum.accumulate(np.where(new_group, np.arange(s), 0))
    m = np.empty(s)
    m[order] = first / s
    return m


def mc_pvalue(measures, data_index: int = 0) -> float:
    """``#{i: M_i <= M_data} / (n+1)``."""
    m = np.asarray(measures, dtype=float)
    return float(np.count_nonzero(m <= m[data_index]) / m.size)


def deviation_pvalue(stats, data_index: int = 0) -> float:
    """``#{i: S_d,i >= S_d,data} / (n+1)``; large values are significant."""
    v = np.asarray(stats, dtype=float)
    if v.size < 2:
        raise ValueError("need the data value and at least one replicate")
    return float(np.count_nonzero(v >= v[data_index]) / v.size)


def critical_measure(measures, alpha: float) -> float:
    """
    Largest measure m such that #{i : M_i < m} <= alpha (n+1).
    """
    m = np.asarray(measures, dtype=float)
    s = m.size
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if s * alpha < 1 - 1e-9:
        raise ValueError("insufficient replicates for level")
    bound = alpha * s * (1 + 1e-12)
    cand = np.unique(m)
    below_counts = np.searchsorted(np.sort(m), cand, side="left")
    ok = cand[below_counts <= bound]
    return float(ok.max())


def global_envelope(samples, measures, alpha: float = 0.05, data_index: int = 0) -> EnvelopeResult:
    """
    100(1 - alpha)% global envelope: pointwise hull of the samples whose
    measure is at least the critical measure.
    """
    s = _as_samples(samples)
    m = np.asarray(measures, dtype=float)
    if m.size != s.shape[0]:
        raise ValueError("one measure per sample required")
    m_alpha = critical_measure(m, alpha)
    keep = m >= m_alpha
    low = s[keep].min(axis=0)
    upp = s[keep].max(axis=0)
    data = s[data_index]
    return EnvelopeResult(
        low=low,
        upp=upp,
        measures=m,
        p_value=mc_pvalue(m, data_index),
        alpha=alpha,
        above=data > upp,
        below=data < low,
        data=data,
    )


def envelope_test(samples, alpha: float = 0.05) -> EnvelopeResult:
    """Full ERL global envelope test with the data in row 0."""
    s = _as_samples(samples)
    return global_envelope(s, erl_measures(pointwise_ranks(s)), alpha)
