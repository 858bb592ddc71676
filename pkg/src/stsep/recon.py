"""
Stochastic reconstruction of point patterns under first-order separability.

The target summaries of the observed pattern X are the square root of the
inhomogeneous space-time K-function, the neighbour fractions D_k and the
separable intensity estimate on a grid. Starting from n points drawn from
the separable intensity of X, one point at a time is replaced by a fresh
draw and the swap is kept if the energy does not increase.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import Grid3, PointPattern, Window, build_grid
from .kernels import (
    REFINE,
    Bandwidths,
    _k1,
    edge_correction_space,
    edge_correction_time,
    estimate_intensity,
    resolve_bandwidths,
)

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReconConfig:
    """
    Energy weights, integration bounds and stopping rule.

    Defaults are the values tuned for the Cumbria foot-and-mouth data
    (kilometres and days).
    """

    w_k: float = 1.0
    w_dk: float = 3e3
    w_delta: float = 4e5
    t_k: float = 12.0
    r_k: float = 6.0
    t_d: float = 6.0
    r_d: float = 3.0
    k_max: int = 3
    max_iter: int = 100_000
    max_consecutive_rejects: int = 100
    grid: tuple[int, int, int] = (50, 50, 10)
    n_lag: int = 20
    epsilon: float | None = None
    delta: float | None = None
    bw_method: str = "rule-of-thumb"
    seed: int = 0

    def __post_init__(self):
        if min(self.t_k, self.r_k, self.t_d, self.r_d) <= 0:
            raise ValueError("integration bounds must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if min(self.w_k, self.w_dk, self.w_delta) < 0 or max(self.w_k, self.w_dk, self.w_delta) <= 0:
            raise ValueError("weights must be non-negative with at least one positive")
        if self.max_iter < 0 or self.max_consecutive_rejects < 1:
            raise ValueError("invalid stopping rule")
        if self.n_lag < 1:
            raise ValueError("n_lag must be at least 1")

    FILE_KEYS = (
        "w_k", "w_dk", "w_delta", "t_k", "r_k", "t_d", "r_d", "k_max",
        "max_iter", "max_consecutive_rejects",
    )

    @classmethod
    def from_file(cls, path) -> "ReconConfig":
        """
        Read ``key = value`` lines; ``#`` starts a comment.

        Besides the energy keys, ``grid = nx,ny,nt``, ``n_lag``, ``epsilon``,
        ``delta`` and ``seed`` are accepted.
        """
        kinds = {f.name: f.type for f in fields(cls)}
        vals = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            val = val.strip("\"'")
            if key == "grid":
                vals[key] = tuple(int(v) for v in val.replace("[", "").replace("]", "").split(","))
            elif key in ("k_max", "max_iter", "max_consecutive_rejects", "n_lag", "seed"):
                vals[key] = int(float(val))
            elif key == "bw_method":
                vals[key] = val
            else:
                vals[key] = float(val)
        return cls(**vals)

    def to_file(self, path) -> None:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                continue
            if k == "grid":
                v = ",".join(str(int(a)) for a in v)
            elif k == "bw_method":
                v = f'"{v}"'
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# translation edge correction


class SetCovariance:
    """
    Normalised overlap ``|W cap (W + h)| / |W|`` of the spatial window with
    its translate.

    Exact for rectangles. For polygons the window is rasterised and the
    overlap obtained by FFT autocorrelation, then interpolated bilinearly.
    """

    def __init__(self, window: Window, resolution: int = 256):
        self.window = window
        if window.is_rectangle:
            xmin, xmax, ymin, ymax = window.rect
            self._a, self._b = xmax - xmin, ymax - ymin
            return
        xmin, xmax, ymin, ymax = window.bbox
        side = max(xmax - xmin, ymax - ymin)
        self._h = side / resolution
        nx = int(np.ceil((xmax - xmin) / self._h))
        ny = int(np.ceil((ymax - ymin) / self._h))
        xs = xmin + (np.arange(nx) + 0.5) * self._h
        ys = ymin + (np.arange(ny) + 0.5) * self._h
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        mask = window.contains_xy(X, Y).astype(float)
        f = np.fft.rfft2(mask, s=(2 * nx, 2 * ny))
        ac = np.fft.irfft2(f * np.conj(f), s=(2 * nx, 2 * ny))
        ac = np.fft.fftshift(ac)  # zero lag at (nx, ny)
        self._ac = np.clip(ac, 0, None) / mask.sum()
        self._origin = (nx, ny)

    def __call__(self, dx, dy) -> np.ndarray:
        dx = np.asarray(dx, dtype=float)
        dy = np.asarray(dy, dtype=float)
        if self.window.is_rectangle:
            return np.clip(1 - np.abs(dx) / self._a, 0, None) * np.clip(1 - np.abs(dy) / self._b, 0, None)
        coords = np.array([dx.ravel() / self._h + self._origin[0], dy.ravel() / self._h + self._origin[1]])
        out = ndimage.map_coordinates(self._ac, coords, order=1, mode="constant", cval=0.0)
        return out.reshape(dx.shape)


def translation_weights(setcov: SetCovariance, window: Window, dx, dy, dt) -> np.ndarray:
    """``|W cap W_h| |T cap T_s| / (|W| |T|)`` for spatial lag h and time lag s."""
    wt = np.clip(1 - np.abs(np.asarray(dt)) / window.duration, 0, None)
    return setcov(dx, dy) * wt


# ---------------------------------------------------------------------------
# summaries


def lag_grid(upper: float, n: int) -> np.ndarray:
    """Midpoints of n equal subintervals of [0, upper]."""
    return (np.arange(n) + 0.5) * upper / n


def _pair_lags(pts):
    d = np.sqrt(((pts[:, None, :2] - pts[None, :, :2]) ** 2).sum(-1))
    tau = np.abs(pts[:, None, 2] - pts[None, :, 2])
    return d, tau


def estimate_K_st(pattern: PointPattern, rho, r_grid, t_grid, setcov: SetCovariance | None = None) -> np.ndarray:
    """
    Translation-corrected inhomogeneous space-time K-function.

    K(r, t) = sum_{i != j} 1{|u_i - u_j| <= r, |t_i - t_j| <= t}
              / (rho_i rho_j w_ij |W| |T|)

    with both orderings of each pair counted.

    Parameters
    ----------
    rho : (n,) array
        Intensity at the points of the pattern.
    r_grid, t_grid : increasing arrays of spatial and temporal lags.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.zeros((len(r_grid), len(t_grid)))
    n = pattern.n
    if n < 2:
        return out
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise ValueError("intensity must be positive at every point")
    win = pattern.window
    setcov = SetCovariance(win) if setcov is None else setcov
    pts = pattern.points
    d, tau = _pair_lags(pts)
    ai = np.searchsorted(r_grid, d, side="left")
    bi = np.searchsorted(t_grid, tau, side="left")
    sel = (ai < len(r_grid)) & (bi < len(t_grid))
    np.fill_diagonal(sel, False)
    i, j = np.nonzero(sel)
    w = translation_weights(setcov, win, pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1], pts[i, 2] - pts[j, 2])
    contrib = 1.0 / (rho[i] * rho[j] * np.maximum(w, 1e-12))
    hist = np.bincount(ai[i, j] * len(t_grid) + bi[i, j], weights=contrib, minlength=out.size)
    out = hist.reshape(out.shape).cumsum(axis=0).cumsum(axis=1)
    return out / win.volume


def estimate_Dk(pattern: PointPattern, k_max: int, r_grid, t_grid) -> np.ndarray:
    """
    Fractions of points with at least k neighbours within (r, t).

    Returns an array of shape (k_max, len(r_grid), len(t_grid)); entry
    [k-1, a, b] is D_k(r_a, t_b).
    """
    r_grid = np.asarray(r_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    n = pattern.n
    out = np.zeros((k_max, len(r_grid), len(t_grid)))
    if n == 0:
        return out
    d, tau = _pair_lags(pattern.points)
    ai = np.searchsorted(r_grid, d, side="left")
    bi = np.searchsorted(t_grid, tau, side="left")
    sel = (ai < len(r_grid)) & (bi < len(t_grid))
    np.fill_diagonal(sel, False)
    cum = np.zeros((n, len(r_grid), len(t_grid)))
    i, j = np.nonzero(sel)
    np.add.at(cum, (i, ai[i, j], bi[i, j]), 1.0)
    cum = cum.cumsum(axis=1).cumsum(axis=2)
    for k in range(1, k_max + 1):
        out[k - 1] = np.mean(cum >= k, axis=0)
    return out


@dataclass(frozen=True, eq=False)
class Summaries:
    K: np.ndarray
    D: np.ndarray
    rho_sep: np.ndarray  # (nx, ny, nt) with zeros outside W


def energy(sx: Summaries, sy: Summaries, ctx: "ReconContext") -> float:
    """
    Energy functional E(X, Y): weighted squared differences of sqrt(K),
    of the D_k and of the separable intensity, integrals as midpoint sums.
    """
    if sx.K.shape != sy.K.shape or sx.D.shape != sy.D.shape or sx.rho_sep.shape != sy.rho_sep.shape:
        raise ValueError("summaries live on different grids")
    return sum(ctx.energy_terms(sx, sy))


class ReconContext:
    """
    Everything about the observed pattern that stays fixed during
    reconstruction: bandwidths, grids, edge-correction helpers and the
    target summaries.
    """

    def __init__(self, X: PointPattern, config: ReconConfig, bandwidths: Bandwidths | None = None):
        self.X = X
        self.config = config
        self.window = X.window
        self.bw = bandwidths or resolve_bandwidths(X, config.epsilon, config.delta, config.bw_method)
        self.grid = build_grid(X.window, *config.grid)
        self.r_k = lag_grid(config.r_k, config.n_lag)
        self.t_k = lag_grid(config.t_k, config.n_lag)
        self.r_d = lag_grid(config.r_d, config.n_lag)
        self.t_d = lag_grid(config.t_d, config.n_lag)
        self.dk_area = (config.r_k / config.n_lag) * (config.t_k / config.n_lag)
        self.dd_area = (config.r_d / config.n_lag) * (config.t_d / config.n_lag)
        self.setcov = SetCovariance(X.window)
        self.quad_res = (self.grid.nx * REFINE, self.grid.ny * REFINE)
        self.quad_res_t = self.grid.nt * REFINE
        self.target = self.summaries(X)
        self.sampler = GridSampler(self.target.rho_sep, self.grid)

    def c_space(self, xy):
        return edge_correction_space(xy, self.window, self.bw.epsilon, self.quad_res)

    def c_time(self, t):
        return edge_correction_time(t, self.window, self.bw.delta, self.quad_res_t)

    def rho_at_points(self, pattern: PointPattern) -> np.ndarray:
        """Non-separable estimate of ``pattern`` at its own points."""
        pts = pattern.points
        w = 1.0 / (self.c_space(pattern.xy) * self.c_time(pattern.t))
        return _kernel_products(pts, pts, self.bw) @ w

    def summaries(self, pattern: PointPattern) -> Summaries:
        cfg = self.config
        rho = self.rho_at_points(pattern)
        K = estimate_K_st(pattern, rho, self.r_k, self.t_k, self.setcov)
        D = estimate_Dk(pattern, cfg.k_max, self.r_d, self.t_d)
        sep = estimate_intensity(pattern, self.bw, self.grid).rho_sep
        return Summaries(K, D, sep)

    def energy_terms(self, sx: Summaries, sy: Summaries):
        cfg = self.config
        ek = cfg.w_k * np.sum((np.sqrt(sx.K) - np.sqrt(sy.K)) ** 2) * self.dk_area
        ed = cfg.w_dk * np.sum((sx.D - sy.D) ** 2) * self.dd_area
        ins = self.grid.inside
        er = cfg.w_delta * self.grid.cell_volume * np.sum((sx.rho_sep[ins] - sy.rho_sep[ins]) ** 2)
        return float(ek), float(ed), float(er)

    def energy(self, Y: PointPattern | Summaries) -> float:
        sy = Y if isinstance(Y, Summaries) else self.summaries(Y)
        return energy(self.target, sy, self)


def _kernel_products(a, b, bw: Bandwidths):
    """k_eps(u_a - u_b) k_delta(t_a - t_b) for all pairs."""
    d2 = ((a[:, None, :2] - b[None, :, :2]) ** 2).sum(-1)
    ks = np.exp(-0.5 * d2 / bw.epsilon**2) / (2 * np.pi * bw.epsilon**2)
    ks[d2 > (8 * bw.epsilon) ** 2] = 0.0
    kt = _k1(a[:, None, 2] - b[None, :, 2], bw.delta)
    return ks * kt


# ---------------------------------------------------------------------------
# sampling


class GridSampler:
    """
    i.i.d. points with density proportional to a non-negative grid field:
    pick a cell with probability proportional to its value, then a uniform
    location in the cell (redrawn until it falls in W).
    """

    def __init__(self, density: np.ndarray, grid: Grid3):
        dens = np.where(grid.inside3, np.asarray(density, dtype=float), 0.0)
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite and non-negative")
        total = dens.sum()
        if total <= 0:
            raise ValueError("zero total density")
        self.grid = grid
        self.cdf = np.cumsum(dens.ravel()) / total
        self.cdf[-1] = 1.0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        g = self.grid
        cells = np.searchsorted(self.cdf, rng.random(n), side="right")
        cells = np.minimum(cells, self.cdf.size - 1)
        i, j, k = np.unravel_index(cells, g.shape)
        out = np.empty((n, 3))
        out[:, 2] = g.ts[k] + (rng.random(n) - 0.5) * g.dt
        todo = np.arange(n)
        for _ in range(100):
            x = g.xs[i[todo]] + (rng.random(todo.size) - 0.5) * g.dx
            y = g.ys[j[todo]] + (rng.random(todo.size) - 0.5) * g.dy
            out[todo, 0], out[todo, 1] = x, y
            ok = g.window.contains_xy(x, y)
            todo = todo[~ok]
            if todo.size == 0:
                break
        if todo.size:
            out[todo, 0], out[todo, 1] = g.xs[i[todo]], g.ys[j[todo]]
        return out


def sample_binomial_from_density(n: int, density: np.ndarray, grid: Grid3, rng: np.random.Generator) -> PointPattern:
    """Exactly n i.i.d. points with density proportional to ``density``."""
    return PointPattern(GridSampler(density, grid).sample(n, rng), grid.window, check=False)


# ---------------------------------------------------------------------------
# incremental state


class _ReconState:
    """
    Summaries of the current pattern Y kept up to date under single-point
    replacement. Distances, kernel products and pair bins live in dense
    (n, n) arrays whose row and column p change when point p is replaced.
    """

    def __init__(self, ctx: ReconContext, pts: np.ndarray):
        self.ctx = ctx
        cfg = ctx.config
        self.n = n = len(pts)
        self.pts = pts.copy()
        self.cs = ctx.c_space(pts[:, :2])
        self.ct = ctx.c_time(pts[:, 2])
        self.P = _kernel_products(pts, pts, ctx.bw)
        d, tau = _pair_lags(pts)
        self.kbin = self._kbins(d, tau)
        np.fill_diagonal(self.kbin, -1)
        self.tw = translation_weights(ctx.setcov, ctx.window, pts[:, None, 0] - pts[None, :, 0],
                                      pts[:, None, 1] - pts[None, :, 1], pts[:, None, 2] - pts[None, :, 2])
        self.da, self.db = self._dbins(d, tau)
        np.fill_diagonal(self.da, len(ctx.r_d))
        self.nrd, self.ntd = len(ctx.r_d), len(ctx.t_d)
        sel = (self.da < self.nrd) & (self.db < self.ntd)
        cum = np.zeros((n, self.nrd, self.ntd), dtype=np.int32)
        i, j = np.nonzero(sel)
        np.add.at(cum, (i, self.da[i, j], self.db[i, j]), 1)
        self.cum = cum.cumsum(axis=1).cumsum(axis=2).astype(np.int32)
        self.kk = np.arange(1, cfg.k_max + 1)[:, None, None]
        self.counts = np.stack([(self.cum >= k).sum(axis=0) for k in range(1, cfg.k_max + 1)]).astype(np.int64)
        g = ctx.grid
        self.sy = np.zeros(g.nx * g.ny)
        self.ty = np.zeros(g.nt)
        for p in range(n):
            ws, wt = self._grid_contrib(pts[p], self.cs[p], self.ct[p])
            self.sy += ws
            self.ty += wt
        self._ins = g.inside.ravel()
        self._sepx = ctx.target.rho_sep.reshape(g.nx * g.ny, g.nt)[self._ins]

    # bins -----------------------------------------------------------------
    def _kbins(self, d, tau):
        ctx = self.ctx
        a = np.searchsorted(ctx.r_k, d, side="left")
        b = np.searchsorted(ctx.t_k, tau, side="left")
        nr, nt = len(ctx.r_k), len(ctx.t_k)
        return np.where((a < nr) & (b < nt), a * nt + b, -1)

    def _dbins(self, d, tau):
        ctx = self.ctx
        return np.searchsorted(ctx.r_d, d, side="left"), np.searchsorted(ctx.t_d, tau, side="left")

    def _grid_contrib(self, pt, cs, ct):
        g, bw = self.ctx.grid, self.ctx.bw
        kx = _k1(g.xs - pt[0], bw.epsilon)
        ky = _k1(g.ys - pt[1], bw.epsilon)
        ws = np.outer(kx, ky).ravel() * g.inside.ravel() / cs
        wt = _k1(g.ts - pt[2], bw.delta) / ct
        return ws, wt

    def _steps(self, a, b):
        """(m, nr, nt) indicators of [a:, b:] blocks."""
        ra = np.arange(self.nrd)[None, :, None] >= a[:, None, None]
        rb = np.arange(self.ntd)[None, None, :] >= b[:, None, None]
        return (ra & rb).astype(np.int32)

    # summaries ------------------------------------------------------------
    def K(self):
        ctx = self.ctx
        w = 1.0 / (self.cs * self.ct)
        rho = self.P @ w
        flat = self.kbin.ravel()
        idx = np.flatnonzero(flat >= 0)
        i, j = np.divmod(idx, self.n)
        contrib = 1.0 / (rho[i] * rho[j] * np.maximum(self.tw.ravel()[idx], 1e-12))
        nr, nt = len(ctx.r_k), len(ctx.t_k)
        hist = np.bincount(flat[idx], weights=contrib, minlength=nr * nt).reshape(nr, nt)
        return hist.cumsum(axis=0).cumsum(axis=1) / ctx.window.volume

    def D(self):
        return self.counts / self.n

    def rho_sep_inside(self):
        return np.outer(self.sy[self._ins], self.ty) / self.n

    def summaries(self) -> Summaries:
        g = self.ctx.grid
        sep = np.outer(self.sy, self.ty).reshape(g.shape) / self.n
        return Summaries(self.K(), self.D(), sep)

    def energy(self) -> float:
        ctx, cfg = self.ctx, self.ctx.config
        tx = ctx.target
        ek = cfg.w_k * np.sum((np.sqrt(tx.K) - np.sqrt(self.K())) ** 2) * ctx.dk_area if cfg.w_k else 0.0
        ed = cfg.w_dk * np.sum((tx.D - self.D()) ** 2) * ctx.dd_area if cfg.w_dk else 0.0
        er = 0.0
        if cfg.w_delta:
            er = cfg.w_delta * ctx.grid.cell_volume * np.sum((self._sepx - self.rho_sep_inside()) ** 2)
        return float(ek + ed + er)

    # replacement ----------------------------------------------------------
    def swap(self, p: int, q: np.ndarray):
        """Replace point p by q in place; returns the undo record."""
        ctx = self.ctx
        old = (
            self.pts[p].copy(), self.cs[p], self.ct[p], self.P[p].copy(), self.kbin[p].copy(),
            self.tw[p].copy(), self.da[p].copy(), self.db[p].copy(), self.sy.copy(), self.ty.copy(),
        )
        cs_q = float(ctx.c_space(q[:2]))
        ct_q = float(ctx.c_time(q[2]))
        pts = self.pts
        pts[p] = q
        d = np.hypot(pts[:, 0] - q[0], pts[:, 1] - q[1])
        tau = np.abs(pts[:, 2] - q[2])

        prow = _kernel_products(q[None, :], pts, ctx.bw)[0]
        kb = self._kbins(d, tau)
        kb[p] = -1
        tw = translation_weights(ctx.setcov, ctx.window, q[0] - pts[:, 0], q[1] - pts[:, 1], q[2] - pts[:, 2])
        da, db = self._dbins(d, tau)
        da[p] = self.nrd

        # D_k: neighbours of the old and the new point change their counts
        old_nb = np.flatnonzero((old[6] < self.nrd) & (old[7] < self.ntd))
        new_nb = np.flatnonzero((da < self.nrd) & (db < self.ntd))
        touched = np.union1d(np.union1d(old_nb, new_nb), [p])
        cum_before = self.cum[touched].copy()
        self.counts -= (cum_before[None] >= self.kk[:, None]).sum(axis=1)
        if old_nb.size:
            self.cum[old_nb] -= self._steps(old[6][old_nb], old[7][old_nb])
        if new_nb.size:
            self.cum[new_nb] += self._steps(da[new_nb], db[new_nb])
            self.cum[p] = self._steps(da[new_nb], db[new_nb]).sum(axis=0)
        else:
            self.cum[p] = 0
        self.counts += (self.cum[touched][None] >= self.kk[:, None]).sum(axis=1)

        for name, row in (("P", prow), ("kbin", kb), ("tw", tw), ("da", da), ("db", db)):
            m = getattr(self, name)
            m[p, :] = row
            m[:, p] = row

        ws_old, wt_old = self._grid_contrib(old[0], old[1], old[2])
        ws_new, wt_new = self._grid_contrib(q, cs_q, ct_q)
        self.sy += ws_new - ws_old
        self.ty += wt_new - wt_old
        self.cs[p], self.ct[p] = cs_q, ct_q
        return p, old, touched, cum_before

    def undo(self, record):
        p, old, touched, cum_before = record
        pt, cs, ct, prow, kb, tw, da, db, sy, ty = old
        self.counts -= (self.cum[touched][None] >= self.kk[:, None]).sum(axis=1)
        self.cum[touched] = cum_before
        self.counts += (cum_before[None] >= self.kk[:, None]).sum(axis=1)
        self.pts[p] = pt
        self.cs[p], self.ct[p] = cs, ct
        for name, row in (("P", prow), ("kbin", kb), ("tw", tw), ("da", da), ("db", db)):
            m = getattr(self, name)
            m[p, :] = row
            m[:, p] = row
        self.sy, self.ty = sy, ty


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    pattern: PointPattern
    initial: PointPattern
    energies: np.ndarray  # initial energy followed by every accepted energy
    n_iter: int
    n_accepted: int
    stop_reason: str
    seconds: float

    @property
    def initial_energy(self):
        return float(self.energies[0])

    @property
    def final_energy(self):
        return float(self.energies[-1])


def reconstruct(X: PointPattern, config: ReconConfig, rng: np.random.Generator, ctx: ReconContext | None = None,
                return_trace: bool = False):
    """
    One reconstruction of X with separable first-order structure.

    Returns the output pattern, or a :class:`ReconstructionResult` if
    ``return_trace`` is set.
    """
    if X.n < 2:
        raise ValueError("reconstruction needs at least two points")
    ctx = ReconContext(X, config) if ctx is None else ctx
    start = time.perf_counter()
    y0 = ctx.sampler.sample(X.n, rng)
    state = _ReconState(ctx, y0)
    e = state.energy()
    energies = [e]
    rejects = 0
    it = 0
    reason = "max_iter"
    while it < config.max_iter:
        if rejects >= config.max_consecutive_rejects:
            reason = "consecutive_rejects"
            break
        it += 1
        p = int(rng.integers(X.n))
        q = ctx.sampler.sample(1, rng)[0]
        rec = state.swap(p, q)
        e_new = state.energy()
        if e_new <= e:
            e = e_new
            energies.append(e)
            rejects = 0
        else:
            state.undo(rec)
            rejects += 1
    else:
        if rejects >= config.max_consecutive_rejects:
            reason = "consecutive_rejects"
    out = PointPattern(state.pts.copy(), X.window, check=False)
    if not return_trace:
        return out
    return ReconstructionResult(
        out, PointPattern(y0, X.window, check=False), np.array(energies), it, len(energies) - 1,
        reason, time.perf_counter() - start,
    )


def _one_reconstruction(args):
    X, config, bw, seed, i = args
    from .septest import replicate_rng

    ctx = ReconContext(X, config, bw)
    return reconstruct(X, config, replicate_rng(seed, i), ctx)


def reconstructions(X: PointPattern, config: ReconConfig, n: int, seed: int | None = None, threads: int = 1):
    """
    ``n`` independent reconstructions; replicate i uses the stream
    (seed, i) so the output does not depend on ``threads``.
    """
    from .septest import replicate_rng

    seed = config.seed if seed is None else seed
    ctx = ReconContext(X, config)
    if threads <= 1:
        out = []
        for i in range(1, n + 1):
            out.append(reconstruct(X, config, replicate_rng(seed, i), ctx))
            _logger.debug("reconstruction %d/%d done", i, n)
        return out
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as ex:
        jobs = [(X, config, ctx.bw, seed, i) for i in range(1, n + 1)]
        return list(ex.map(_one_reconstruction, jobs, chunksize=max(1, n // (4 * threads))))


def run_reconstruction_test(pattern: PointPattern, recon_config: ReconConfig, test_config, replicates=None,
                            threads: int = 1, statistics=None):
    """
    Monte Carlo separability test with reconstructions as null replicates.

    Generates ``test_config.n_perm`` reconstructions (unless given) and
    applies the envelope machinery exactly as for permutations.
    """
    from .septest import replicate_test

    if recon_config.epsilon is None or recon_config.delta is None:
        bw = resolve_bandwidths(pattern, recon_config.epsilon, recon_config.delta, recon_config.bw_method)
        recon_config = replace(recon_config, epsilon=bw.epsilon, delta=bw.delta)
    if test_config.epsilon is None and test_config.delta is None:
        test_config = replace(test_config, epsilon=recon_config.epsilon, delta=recon_config.delta)
    if replicates is None:
        replicates = reconstructions(pattern, recon_config, test_config.n_perm, test_config.seed, threads)
    res = replicate_test(pattern, replicates, test_config, statistics, method="reconstruction")
    return res if statistics is not None else res[test_config.statistic]
