"""Separability test functions S, S_space, S_time and the deviation S_d."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Grid3
from .kernels import IntensityField

ZERO_TOL = 1e-12

STATISTICS = ("S", "Sspace", "Stime", "Sd")


@dataclass(frozen=True, eq=False)
class FunctionSample:
    """
    A test function evaluated on a fixed discretisation.

    ``index`` holds flat grid indices of the evaluation cells: into the
    (nx, ny, nt) grid for S, into (nx, ny) for S_space and into (nt,) for
    S_time.
    """

    values: np.ndarray
    tag: str
    index: np.ndarray
    grid: Grid3

    @property
    def d(self):
        return len(self.values)

    def coords(self) -> np.ndarray:
        g = self.grid
        if self.tag == "S":
            i, j, k = np.unravel_index(self.index, g.shape)
            return np.column_stack([g.xs[i], g.ys[j], g.ts[k]])
        if self.tag == "Sspace":
            i, j = np.unravel_index(self.index, (g.nx, g.ny))
            return np.column_stack([g.xs[i], g.ys[j]])
        return g.ts[self.index][:, None]


def separability_mask(fld: IntensityField, rel_tol: float = ZERO_TOL) -> np.ndarray:
    """
    Cells where S is well defined.

    Inside W and with rho, rho_space and rho_time all above
    ``rel_tol * n / |W x T|``.
    """
    g = fld.grid
    thr = rel_tol * fld.n / g.window.volume
    m = g.inside3 & (fld.rho_st > thr)
    m &= (fld.rho_space > thr)[:, :, None]
    m &= (fld.rho_time > thr)[None, None, :]
    return m


def compute_S(fld: IntensityField, mask: np.ndarray | None = None) -> FunctionSample:
    """S(u, t) = rho(u, t) / (rho_space(u) rho_time(t) / n) on unmasked cells."""
    if mask is None:
        mask = separability_mask(fld)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("degenerate field: every cell is masked")
    num = fld.rho_st.ravel()[idx]
    den = fld.rho_sep.ravel()[idx]
    return FunctionSample(_ratio(num, den), "S", idx, fld.grid)


def _ratio(num, den):
    # a replicate may vanish where the data did not; 0/0 reads as 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def _slice_ids(index, grid: Grid3):
    i, j, k = np.unravel_index(index, grid.shape)
    return i * grid.ny + j, k


def compute_S_time(s: FunctionSample, grid: Grid3 | None = None) -> FunctionSample:
    """S_time(t) = sum over unmasked cells of slice t of S * cell area."""
    grid = s.grid if grid is None else grid
    _, k = _slice_ids(s.index, grid)
    vals = np.bincount(k, weights=s.values, minlength=grid.nt) * grid.cell_area
    keep = np.unique(k)
    return FunctionSample(vals[keep], "Stime", keep, grid)


def compute_S_space(s: FunctionSample, grid: Grid3 | None = None) -> FunctionSample:
    """S_space(u) = sum over unmasked slices of S * cell length."""
    grid = s.grid if grid is None else grid
    c, _ = _slice_ids(s.index, grid)
    vals = np.bincount(c, weights=s.values, minlength=grid.nx * grid.ny) * grid.cell_length
    keep = np.unique(c)
    return FunctionSample(vals[keep], "Sspace", keep, grid)


def compute_S_d(fld: IntensityField, mask: np.ndarray | None = None) -> float:
    """Midpoint-rule integral of |rho - rho_sep| over unmasked cells."""
    if mask is None:
        mask = separability_mask(fld)
    diff = np.abs(fld.rho_st - fld.rho_sep)[mask]
    return float(diff.sum() * fld.grid.cell_volume)


class StatisticMap:
    """
    Vectorised evaluation of the statistics on a frozen mask.

    Built once from the data field; maps stacked non-separable estimates
    (replicates x grid cells) and their separable counterparts to the rows
    entering the envelope machinery.
    """

    def __init__(self, fld: IntensityField, mask: np.ndarray | None = None):
        self.grid = fld.grid
        self.mask = separability_mask(fld) if mask is None else mask
        self.index = np.flatnonzero(self.mask)
        if self.index.size == 0:
            raise ValueError("degenerate field: every cell is masked")
        cell, k = _slice_ids(self.index, self.grid)
        self.space_ids, self._space_inv = np.unique(cell, return_inverse=True)
        self.time_ids, self._time_inv = np.unique(k, return_inverse=True)

    def s_values(self, rho_st, rho_sep):
        """rho arrays shaped (..., nx*ny*nt) -> S values (..., d)."""
        return _ratio(rho_st[..., self.index], rho_sep[..., self.index])

    def s_time(self, s):
        s = np.atleast_2d(s)
        out = np.zeros((s.shape[0], len(self.time_ids)))
        for r in range(s.shape[0]):
            out[r] = np.bincount(self._time_inv, weights=s[r], minlength=len(self.time_ids))
        return out * self.grid.cell_area

    def s_space(self, s):
        s = np.atleast_2d(s)
        out = np.zeros((s.shape[0], len(self.space_ids)))
        for r in range(s.shape[0]):
            out[r] = np.bincount(self._space_inv, weights=s[r], minlength=len(self.space_ids))
        return out * self.grid.cell_length

    def s_d(self, rho_st, rho_sep):
        diff = np.abs(rho_st[..., self.index] - rho_sep[..., self.index])
        return diff.sum(axis=-1) * self.grid.cell_volume

    def evaluate(self, rho_st, rho_sep, statistics=STATISTICS) -> dict:
        """Dictionary statistic tag -> (replicates, d) array (or (replicates,) for Sd)."""
        rho_st = np.atleast_2d(rho_st.reshape(-1, self.grid.nx * self.grid.ny * self.grid.nt))
        rho_sep = np.atleast_2d(rho_sep.reshape(-1, rho_st.shape[-1]))
        out = {}
        need_s = any(st in ("S", "Sspace", "Stime") for st in statistics)
        s = self.s_values(rho_st, rho_sep) if need_s else None
        for st in statistics:
            if st == "S":
                out[st] = s
            elif st == "Stime":
                out[st] = self.s_time(s)
            elif st == "Sspace":
                out[st] = self.s_space(s)
            elif st == "Sd":
                out[st] = self.s_d(rho_st, rho_sep)
            else:
                raise ValueError(f"unknown statistic {st!r}")
        return out

    def sample(self, tag: str, values) -> FunctionSample:
        idx = {"S": self.index, "Sspace": self.space_ids, "Stime": self.time_ids}[tag]
        return FunctionSample(np.asarray(values), tag, idx, self.grid)
