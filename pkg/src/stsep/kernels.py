"""
Gaussian kernel intensity estimation with edge correction.

The four estimators share two per-point weight matrices: a spatial one with
entries k_eps(c - u_i) / C_W(u_i) for spatial cell centres c, and a temporal
one with entries k_delta(s - t_i) / C_T(t_i) for time-slice centres s. The
non-separable estimate is their product summed over points, which is a
single matrix product. Time permutations only reorder the columns of the
temporal matrix, which is what makes the permutation test cheap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import Grid3, PointPattern, Window, build_grid

_logger = logging.getLogger(__name__)

TRUNCATE = 8.0  # kernels vanish beyond this many bandwidths
REFINE = 4  # edge-correction quadrature refinement of the evaluation grid
MIN_QUADRATURE = 10
_SQRT2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Bandwidths:
    """Spatial (epsilon) and temporal (delta) kernel bandwidths."""

    epsilon: float
    delta: float
    method: str = "fixed"

    def __post_init__(self):
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("bandwidths must be positive")
        if not (np.isfinite(self.epsilon) and np.isfinite(self.delta)):
            raise ValueError("bandwidths must be finite")


def gaussian_kernel(v, b: float, d: int = 1):
    """
    Isotropic Gaussian kernel ``k(v / b) / b**d``.

    Parameters
    ----------
    v : array_like
        Displacements. For ``d == 2`` the last axis holds the two
        coordinates.
    b : float
        Bandwidth (standard deviation), must be positive.
    d : {1, 2}

    Returns
    -------
    ndarray or float
    """
    if not b > 0:
        raise ValueError("bandwidth must be positive")
    v = np.asarray(v, dtype=float)
    if d == 1:
        r2 = v * v
    elif d == 2:
        if v.shape[-1] != 2:
            raise ValueError("2-d kernel needs displacements with a trailing axis of length 2")
        r2 = np.sum(v * v, axis=-1)
    else:
        raise ValueError("dimension must be 1 or 2")
    out = np.exp(-0.5 * r2 / (b * b)) / (_SQRT2PI * b) ** d
    out = np.where(r2 > (TRUNCATE * b) ** 2, 0.0, out)
    return out[()] if out.ndim == 0 else out


def _k1(diff, b):
    """1-d Gaussian kernel on an array of differences (no argument checks)."""
    out = np.exp(-0.5 * (diff / b) ** 2) / (_SQRT2PI * b)
    out[np.abs(diff) > TRUNCATE * b] = 0.0
    return out


# ---------------------------------------------------------------------------
# edge correction


def _quadrature_resolution(window: Window, resolution):
    if resolution is None:
        return (25 * REFINE, 25 * REFINE)
    nx, ny = resolution
    if nx < MIN_QUADRATURE or ny < MIN_QUADRATURE:
        raise ValueError("insufficient quadrature grid")
    return int(nx), int(ny)


def edge_correction_space(u, window: Window, epsilon: float, resolution=None):
    """
    Kernel mass ``C_{W,eps}(u) = int_W k_eps(v - u) dv`` for points u.

    Midpoint rule over a regular (nx, ny) subdivision of the bounding box of
    W, keeping cells whose centre lies in W.

    Parameters
    ----------
    u : (2,) or (n, 2) array_like
    window : Window
    epsilon : float
    resolution : (int, int), optional
        Quadrature grid, default ``(100, 100)``; each side must be >= 10.

    Returns
    -------
    float or ndarray
    """
    if not epsilon > 0:
        raise ValueError("bandwidth must be positive")
    nx, ny = _quadrature_resolution(window, resolution)
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 1
    u = np.atleast_2d(u)
    fine = build_grid(window, nx, ny, 1)

    kx = _k1(fine.xs[None, :] - u[:, :1], epsilon) * fine.dx
    ky = _k1(fine.ys[None, :] - u[:, 1:2], epsilon) * fine.dy
    if window.is_rectangle:
        c = kx.sum(axis=1) * ky.sum(axis=1)
    else:
        # sum_{a,b} kx[i,a] ky[i,b] mask[a,b]
        mask = fine.inside.astype(float)
        c = np.einsum("ia,ab,ib->i", kx, mask, ky, optimize=True)
    # the midpoint rule may overshoot the exact mass slightly
    c = np.minimum(c, 1.0)
    return float(c[0]) if scalar else c


def edge_correction_time(t, window: Window, delta: float, resolution: int | None = None):
    """Temporal kernel mass ``C_{T,delta}(t)`` by the midpoint rule on [t0, t1]."""
    if not delta > 0:
        raise ValueError("bandwidth must be positive")
    nt = 20 * REFINE if resolution is None else int(resolution)
    if nt < MIN_QUADRATURE:
        raise ValueError("insufficient quadrature grid")
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    edges = np.linspace(window.t0, window.t1, nt + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    c = np.minimum(_k1(mids[None, :] - t[:, None], delta).sum(axis=1) * (edges[1] - edges[0]), 1.0)
    return float(c[0]) if scalar else c


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """
    Edge-corrected kernel weights of one pattern on one grid.

    space : (nx*ny, n) array, zero for cells outside W
    time : (nt, n) array
    """

    grid: Grid3
    bandwidths: Bandwidths
    space: np.ndarray
    time: np.ndarray
    c_space: np.ndarray
    c_time: np.ndarray

    @property
    def n(self):
        return self.space.shape[1]


def kernel_weights(pattern: PointPattern, bw: Bandwidths, grid: Grid3) -> KernelWeights:
    if pattern.n == 0:
        raise ValueError("empty pattern")
    win = pattern.window
    c_s = edge_correction_space(pattern.xy, win, bw.epsilon, (grid.nx * REFINE, grid.ny * REFINE))
    c_t = edge_correction_time(pattern.t, win, bw.delta, grid.nt * REFINE)
    if np.any(c_s <= 0) or np.any(c_t <= 0):
        raise FloatingPointError("edge correction vanished; bandwidth too small for the quadrature grid")
    kx = _k1(grid.xs[:, None] - pattern.x[None, :], bw.epsilon)
    ky = _k1(grid.ys[:, None] - pattern.y[None, :], bw.epsilon)
    ws = (kx[:, None, :] * ky[None, :, :]).reshape(grid.nx * grid.ny, -1)
    ws *= grid.inside.reshape(-1, 1)
    ws /= c_s[None, :]
    wt = _k1(grid.ts[:, None] - pattern.t[None, :], bw.delta) / c_t[None, :]
    return KernelWeights(grid, bw, ws, wt, c_s, c_t)


@dataclass(frozen=True, eq=False)
class IntensityField:
    """
    The four kernel intensity estimates of one pattern on a grid.

    Arrays are dense over the grid; spatial cells outside W hold zeros.

    Attributes
    ----------
    rho_st : (nx, ny, nt) non-separable estimate
    rho_space : (nx, ny) spatial component intensity
    rho_time : (nt,) temporal component intensity
    rho_sep : (nx, ny, nt) separable estimate rho_space * rho_time / n
    """

    grid: Grid3
    n: int
    bandwidths: Bandwidths
    rho_st: np.ndarray
    rho_space: np.ndarray
    rho_time: np.ndarray
    rho_sep: np.ndarray
    weights: KernelWeights | None = field(default=None, repr=False)

    def mass(self) -> dict:
        """Midpoint-rule integrals of each estimate over W x T."""
        g = self.grid
        ins = g.inside
        return {
            "rho_st": float(self.rho_st[ins].sum() * g.cell_volume),
            "rho_space": float(self.rho_space[ins].sum() * g.cell_area),
            "rho_time": float(self.rho_time.sum() * g.cell_length),
            "rho_sep": float(self.rho_sep[ins].sum() * g.cell_volume),
        }


def estimate_rho_space(pattern: PointPattern, epsilon: float, grid: Grid3) -> np.ndarray:
    """Edge-corrected spatial intensity on the (nx, ny) cells of ``grid``."""
    if pattern.n == 0:
        raise ValueError("empty pattern")
    c_s = edge_correction_space(pattern.xy, pattern.window, epsilon, (grid.nx * REFINE, grid.ny * REFINE))
    kx = _k1(grid.xs[:, None] - pattern.x[None, :], epsilon)
    ky = _k1(grid.ys[:, None] - pattern.y[None, :], epsilon)
    rho = np.einsum("ai,bi,i->ab", kx, ky, 1.0 / c_s, optimize=True)
    return np.where(grid.inside, rho, 0.0)


def estimate_rho_time(pattern: PointPattern, delta: float, grid: Grid3) -> np.ndarray:
    """Edge-corrected temporal intensity on the nt time slices of ``grid``."""
    if pattern.n == 0:
        raise ValueError("empty pattern")
    c_t = edge_correction_time(pattern.t, pattern.window, delta, grid.nt * REFINE)
    return _k1(grid.ts[:, None] - pattern.t[None, :], delta) @ (1.0 / c_t)


def field_from_weights(w: KernelWeights, order=None) -> IntensityField:
    """
    Build all four estimates from kernel weights.

    ``order`` reassigns times to locations: location i gets the time of
    point ``order[i]``.
    """
    g = w.grid
    n = w.n
    wt = w.time if order is None else w.time[:, order]
    rho_st = (w.space @ wt.T).reshape(g.nx, g.ny, g.nt)
    rho_space = w.space.sum(axis=1).reshape(g.nx, g.ny)
    rho_time = w.time.sum(axis=1)
    rho_sep = rho_space[:, :, None] * rho_time[None, None, :] / n
    return IntensityField(g, n, w.bandwidths, rho_st, rho_space, rho_time, rho_sep, w)


def estimate_intensity(pattern: PointPattern, bw: Bandwidths, grid: Grid3) -> IntensityField:
    """All four kernel estimates of ``pattern`` on ``grid``."""
    return field_from_weights(kernel_weights(pattern, bw, grid))


def estimate_rho_st(pattern: PointPattern, bw: Bandwidths, grid: Grid3) -> np.ndarray:
    return estimate_intensity(pattern, bw, grid).rho_st


def estimate_rho_sep(pattern: PointPattern, bw: Bandwidths, grid: Grid3) -> np.ndarray:
    return estimate_intensity(pattern, bw, grid).rho_sep


def rho_st_at(pattern: PointPattern, bw: Bandwidths, at=None, c_space=None, c_time=None) -> np.ndarray:
    """
    Non-separable estimate evaluated at arbitrary (x, y, t) locations.

    Defaults to the pattern's own points (the point itself included).
    """
    pts = pattern.points if at is None else np.atleast_2d(np.asarray(at, dtype=float))
    if c_space is None:
        c_space = edge_correction_space(pattern.xy, pattern.window, bw.epsilon)
    if c_time is None:
        c_time = edge_correction_time(pattern.t, pattern.window, bw.delta)
    dxy = pts[:, None, :2] - pattern.xy[None, :, :]
    ks = gaussian_kernel(dxy, bw.epsilon, 2)
    kt = _k1(pts[:, None, 2] - pattern.t[None, :], bw.delta)
    return (ks * kt) @ (1.0 / (c_space * c_time))


def conditional_intensity(fld: IntensityField, mode: str = "space-given-time") -> np.ma.MaskedArray:
    """
    Conditional intensities rho(u|t) = rho(u,t)/rho_time(t) or
    rho(t|u) = rho(u,t)/rho_space(u).

    Cells with a zero denominator or outside W are masked.
    """
    g = fld.grid
    if mode in ("space-given-time", "u|t"):
        den = np.broadcast_to(fld.rho_time[None, None, :], g.shape)
    elif mode in ("time-given-space", "t|u"):
        den = np.broadcast_to(fld.rho_space[:, :, None], g.shape)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    bad = (den <= 0) | ~g.inside3
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(bad, 0.0, fld.rho_st / np.where(bad, 1.0, den))
    return np.ma.MaskedArray(val, mask=bad)


# ---------------------------------------------------------------------------
# bandwidth selection


def rule_of_thumb(values) -> float:
    """0.9 * min(sd, IQR / 1.34) * m**(-1/5)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2 or np.ptp(v) == 0:
        raise ValueError("degenerate coordinates: all values equal")
    sd = np.std(v, ddof=1)
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * v.size ** (-0.2)


def _loo_loglik_time(t, window, delta):
    c = edge_correction_time(t, window, delta)
    k = _k1(t[:, None] - t[None, :], delta)
    np.fill_diagonal(k, 0.0)
    dens = k @ (1.0 / c)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(dens)))


def _loo_loglik_space(xy, window, eps):
    c = edge_correction_space(xy, window, eps)
    d = xy[:, None, :] - xy[None, :, :]
    k = gaussian_kernel(d, eps, 2)
    np.fill_diagonal(k, 0.0)
    dens = k @ (1.0 / c)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(dens)))


def cv_curve(pattern: PointPattern, axis: str, n_grid: int = 20):
    """Leave-one-out log-likelihood over a log grid on [range/200, range/2]."""
    if axis == "time":
        rng_ = np.ptp(pattern.t)
    elif axis == "space":
        rng_ = 0.5 * (np.ptp(pattern.x) + np.ptp(pattern.y))
    else:
        raise ValueError("axis must be 'space' or 'time'")
    if rng_ <= 0:
        raise ValueError("degenerate coordinates: all values equal")
    grid = np.geomspace(rng_ / 200.0, rng_ / 2.0, n_grid)
    if axis == "time":
        ll = [_loo_loglik_time(pattern.t, pattern.window, h) for h in grid]
    else:
        ll = [_loo_loglik_space(pattern.xy, pattern.window, h) for h in grid]
    return grid, np.array(ll)


def select_bandwidth(pattern: PointPattern, axis: str, method: str = "rule-of-thumb") -> float:
    """
    Data-driven bandwidth for one axis.

    ``rule-of-thumb`` applies 0.9 min(sd, IQR/1.34) n^(-1/5) to the times,
    or to x and y separately and averages. ``likelihood-CV`` maximises the
    leave-one-out log-likelihood of the edge-corrected estimator.
    """
    if pattern.n < 10:
        raise ValueError("bandwidth selection needs at least 10 points")
    if method in ("rule-of-thumb", "auto", "rot"):
        if axis == "time":
            return rule_of_thumb(pattern.t)
        if axis == "space":
            return 0.5 * (rule_of_thumb(pattern.x) + rule_of_thumb(pattern.y))
        raise ValueError("axis must be 'space' or 'time'")
    if method in ("likelihood-CV", "cv"):
        grid, ll = cv_curve(pattern, axis)
        return float(grid[int(np.argmax(ll))])
    raise ValueError(f"unknown bandwidth method {method!r}")


def resolve_bandwidths(pattern: PointPattern, epsilon=None, delta=None, method="rule-of-thumb") -> Bandwidths:
    """Fixed values where given, otherwise selected by ``method``."""
    eps = epsilon if epsilon is not None else select_bandwidth(pattern, "space", method)
    dlt = delta if delta is not None else select_bandwidth(pattern, "time", method)
    tag = "fixed" if epsilon is not None and delta is not None else method
    return Bandwidths(float(eps), float(dlt), tag)
