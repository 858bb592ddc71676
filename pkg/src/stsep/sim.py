"""
Simulation models for level and power studies.

* Inhomogeneous Poisson processes on the unit cube with a separable
  baseline plus a Gaussian "burst", simulated by independent thinning.
* Log-Gaussian Cox processes driven by a sum of spatial, temporal and
  space-time Gaussian fields on a regular grid.
* A Neyman-Scott cluster process used to check reconstructions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .geometry import Grid3, PointPattern, Window, build_grid

BURST_MEAN = (0.3, 0.3, 0.2)
BURST_SD = 0.05
BASE_MEAN = 0.5
BASE_SD = 0.2
CASES = ("i", "ii", "iii", "iv")


def _normal_pdf(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (np.sqrt(2 * np.pi) * sd)


def _normal_mass(a, b, mu, sd):
    return ndtr((b - mu) / sd) - ndtr((a - mu) / sd)


@dataclass(frozen=True)
class BurstModel:
    """
    Intensity (nu - gamma) xi(u) psi(t) + gamma phi(u, t) on the unit cube.

    ``case`` selects the baseline: (i) xi = psi = 1; (ii) psi normal in
    time; (iii) xi bivariate normal in space; (iv) both. ``base_sd`` and
    ``burst_sd`` are standard deviations of the baseline and burst normal
    densities (diagonal covariances).
    """

    nu: float
    gamma: float
    case: str = "i"
    base_sd: float = BASE_SD
    burst_sd: float = BURST_SD
    burst_mean: tuple[float, float, float] = BURST_MEAN

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}")
        if not (0 <= self.gamma <= self.nu / 2):
            raise ValueError("gamma must lie in [0, nu/2]")
        if self.base_sd <= 0 or self.burst_sd <= 0:
            raise ValueError("standard deviations must be positive")

    @property
    def spatial_normal(self) -> bool:
        return self.case in ("iii", "iv")

    @property
    def temporal_normal(self) -> bool:
        return self.case in ("ii", "iv")

    def xi(self, x, y):
        if self.spatial_normal:
            return _normal_pdf(x, BASE_MEAN, self.base_sd) * _normal_pdf(y, BASE_MEAN, self.base_sd)
        return np.ones(np.broadcast(x, y).shape)

    def psi(self, t):
        if self.temporal_normal:
            return _normal_pdf(t, BASE_MEAN, self.base_sd)
        return np.ones(np.shape(t))

    def phi(self, x, y, t):
        mx, my, mt = self.burst_mean
        s = self.burst_sd
        return _normal_pdf(x, mx, s) * _normal_pdf(y, my, s) * _normal_pdf(t, mt, s)

    def baseline_mass(self) -> float:
        """Integral of xi psi over the unit cube."""
        m = 1.0
        if self.spatial_normal:
            m *= _normal_mass(0, 1, BASE_MEAN, self.base_sd) ** 2
        if self.temporal_normal:
            m *= _normal_mass(0, 1, BASE_MEAN, self.base_sd)
        return m

    def burst_mass(self) -> float:
        return float(np.prod([_normal_mass(0, 1, m, self.burst_sd) for m in self.burst_mean]))

    def expected_count(self) -> float:
        return (self.nu - self.gamma) * self.baseline_mass() + self.gamma * self.burst_mass()

    def upper_bound(self) -> float:
        """Sum of the suprema of the two terms over the cube."""
        xi_max = _normal_pdf(0, 0, self.base_sd) ** 2 if self.spatial_normal else 1.0
        psi_max = _normal_pdf(0, 0, self.base_sd) if self.temporal_normal else 1.0
        phi_max = _normal_pdf(0, 0, self.burst_sd) ** 3
        return (self.nu - self.gamma) * xi_max * psi_max + self.gamma * phi_max

    def __call__(self, x, y, t):
        return burst_intensity(self, x, y, t)


def burst_intensity(model: BurstModel, x, y, t):
    """Intensity of the burst model at (x, y, t)."""
    return (model.nu - model.gamma) * model.xi(x, y) * model.psi(t) + model.gamma * model.phi(x, y, t)


def solve_nu(case: str, gamma: float, target_n: float = 600.0, **kw) -> float:
    """
    Rate scale giving ``target_n`` expected points on the unit cube.

    The expected count is linear in nu, so the root is explicit.
    """
    probe = BurstModel(nu=max(2 * gamma, 1.0), gamma=0.0, case=case, **kw)
    base = probe.baseline_mass()
    burst = BurstModel(nu=2 * gamma + 1.0, gamma=gamma, case=case, **kw).burst_mass() if gamma else 0.0
    nu = gamma + (target_n - gamma * burst) / base
    if gamma > nu / 2:
        raise ValueError("target count too small for this gamma")
    return float(nu)


def burst_model(case: str, gamma: float, target_n: float = 600.0, **kw) -> BurstModel:
    return BurstModel(nu=solve_nu(case, gamma, target_n, **kw), gamma=gamma, case=case, **kw)


def uniform_in_window(window: Window, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent uniform points in W x T (rejection from the bounding box)."""
    xmin, xmax, ymin, ymax = window.bbox
    out = np.empty((0, 3))
    while len(out) < n:
        m = max(16, int(1.3 * (n - len(out)) * (xmax - xmin) * (ymax - ymin) / window.area))
        cand = np.column_stack([
            rng.uniform(xmin, xmax, m),
            rng.uniform(ymin, ymax, m),
            rng.uniform(window.t0, window.t1, m),
        ])
        cand = cand[window.contains_xy(cand[:, 0], cand[:, 1])]
        out = np.vstack([out, cand])
    return out[:n]


def simulate_thinned_poisson(
    rho: Callable,
    window: Window,
    rng: np.random.Generator,
    rho_max: float | None = None,
    scan: tuple[int, int, int] = (40, 40, 40),
) -> PointPattern:
    """
    Inhomogeneous Poisson process by independent thinning.

    A homogeneous Poisson process of rate ``rho_max`` on W x T is thinned
    with retention probability ``rho(x, y, t) / rho_max``. The bound is
    checked on a grid scan (and defaults to 1.05 times the scanned maximum)
    and on every dominating point.
    """
    g = build_grid(window, *scan)
    c = g.centers()
    c = c[np.repeat(g.inside.ravel(), g.nt)]
    scanned = float(np.max(rho(c[:, 0], c[:, 1], c[:, 2]))) if len(c) else 0.0
    if rho_max is None:
        rho_max = 1.05 * scanned
    if scanned > rho_max:
        raise ValueError("invalid dominating rate")
    if rho_max <= 0:
        return PointPattern(np.empty((0, 3)), window, check=False)
    count = rng.poisson(rho_max * window.volume)
    pts = uniform_in_window(window, count, rng)
    val = rho(pts[:, 0], pts[:, 1], pts[:, 2])
    if np.any(val > rho_max * (1 + 1e-12)):
        raise ValueError("invalid dominating rate")
    keep = rng.uniform(size=count) * rho_max < val
    return PointPattern(pts[keep], window, check=False)


def simulate_burst(model: BurstModel, rng: np.random.Generator) -> PointPattern:
    """One realisation of the burst model on the unit cube."""
    return simulate_thinned_poisson(model, Window.unit_cube(), rng, rho_max=model.upper_bound())


# ---------------------------------------------------------------------------
# Gaussian random fields


def gaussian_cov(phi: float):
    """C(h) = exp(-h^2 / phi)."""
    return lambda h: np.exp(-np.asarray(h) ** 2 / phi)


def exponential_cov(phi: float):
    """C(h) = exp(-|h| / phi)."""
    return lambda h: np.exp(-np.abs(np.asarray(h)) / phi)


def cholesky_factor(cov: np.ndarray, jitter: float = 1e-10) -> np.ndarray:
    """Lower-triangular L with L L^T = cov + jitter I."""
    a = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(a + jitter * np.eye(len(a)))
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("covariance not PD") from None


def kron_factor(l1: np.ndarray, l2: np.ndarray) -> np.ndarray:
    return np.kron(l1, l2)


def _space_factor(cov1, xs, ys, jitter):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    p = np.column_stack([X.ravel(), Y.ravel()])
    h = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
    return cholesky_factor(cov1(h), jitter)


def _time_factor(cov2, ts, jitter):
    return cholesky_factor(cov2(ts[:, None] - ts[None, :]), jitter)


def grf_from_factors(l1, l2, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """
    (l1 kron l2) z for i.i.d. standard normal z, shaped (n1, n2).

    Either factor may be None for a single-factor field.
    """
    reps = 1 if size is None else size
    if l1 is not None and l2 is not None:
        z = rng.standard_normal((reps, l1.shape[0], l2.shape[0]))
        out = np.einsum("ia,rab,jb->rij", l1, z, l2, optimize=True)
    elif l1 is not None:
        out = rng.standard_normal((reps, l1.shape[0])) @ l1.T
    elif l2 is not None:
        out = rng.standard_normal((reps, l2.shape[0])) @ l2.T
    else:
        raise ValueError("need at least one factor")
    return out[0] if size is None else out


def simulate_grf_kronecker(
    cov_space: Callable | None,
    cov_time: Callable | None,
    grid: Grid3,
    rng: np.random.Generator,
    size: int | None = None,
    jitter: float = 1e-10,
) -> np.ndarray:
    """
    Zero-mean Gaussian field with covariance C1(u1, u2) C2(t1, t2) on the
    cell centres of ``grid``.

    The field is (L1 kron L2) z with L1, L2 Cholesky factors of the spatial
    and temporal covariance matrices and z i.i.d. standard normal. Passing
    ``None`` for one covariance gives a purely temporal (nt,) or purely
    spatial (nx, ny) field.

    Returns
    -------
    ndarray of shape (nx, ny, nt), (nx, ny) or (nt,), with a leading
    ``size`` axis if requested.
    """
    if cov_space is None and cov_time is None:
        raise ValueError("need at least one covariance")
    l1 = None if cov_space is None else _space_factor(cov_space, grid.xs, grid.ys, jitter)
    l2 = None if cov_time is None else _time_factor(cov_time, grid.ts, jitter)
    out = grf_from_factors(l1, l2, rng, size)
    lead = () if size is None else (size,)
    if l1 is not None and l2 is not None:
        return out.reshape(lead + grid.shape)
    if l1 is not None:
        return out.reshape(lead + (grid.nx, grid.ny))
    return out


@dataclass(frozen=True)
class LgcpModel:
    """
    Log-Gaussian Cox process on the unit cube with
    m(u, t) = beta0 + beta1 (x - t) + gamma' x t and
    Z = sigma1 Z_s + sigma2 Z_t + gamma'' Z_st.
    """

    beta0: float = 5.05
    beta1: float = 0.25
    gamma_prime: float = 0.0
    gamma_dprime: float = 0.0
    sigma1: float = 0.5
    sigma2: float = 0.5
    phi1: float = 0.06
    phi2: float = 0.05
    grid_dims: tuple[int, int, int] = (20, 20, 20)

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0 or self.gamma_dprime < 0:
            raise ValueError("field scales must be non-negative")
        if self.phi1 <= 0 or self.phi2 <= 0:
            raise ValueError("correlation ranges must be positive")

    def trend(self, x, y, t):
        return self.beta0 + self.beta1 * (x - t) + self.gamma_prime * x * t

    def factors(self, grid: Grid3, jitter=1e-10):
        l1 = _space_factor(gaussian_cov(self.phi1), grid.xs, grid.ys, jitter)
        l2 = _time_factor(exponential_cov(self.phi2), grid.ts, jitter)
        return l1, l2


class LgcpSimulator:
    """Caches the covariance factors of an :class:`LgcpModel` on its grid."""

    def __init__(self, model: LgcpModel, window: Window | None = None):
        self.model = model
        self.window = Window.unit_cube() if window is None else window
        self.grid = build_grid(self.window, *model.grid_dims)
        self.l1, self.l2 = model.factors(self.grid)

    def field(self, rng: np.random.Generator) -> np.ndarray:
        m, g = self.model, self.grid
        # draw all three components every time so streams do not depend on parameters
        zs = grf_from_factors(self.l1, None, rng).reshape(g.nx, g.ny)
        zt = grf_from_factors(None, self.l2, rng)
        zst = grf_from_factors(self.l1, self.l2, rng).reshape(g.shape)
        z = m.sigma1 * zs[:, :, None] + m.sigma2 * zt[None, None, :]
        return z + m.gamma_dprime * zst

    def log_intensity(self, rng: np.random.Generator) -> np.ndarray:
        g = self.grid
        X, Y, T = np.meshgrid(g.xs, g.ys, g.ts, indexing="ij")
        return self.model.trend(X, Y, T) + self.field(rng)

    def simulate(self, rng: np.random.Generator) -> PointPattern:
        return poisson_from_grid(np.exp(self.log_intensity(rng)), self.grid, rng)


def poisson_from_grid(lam: np.ndarray, grid: Grid3, rng: np.random.Generator) -> PointPattern:
    """Poisson process with intensity constant on each grid cell."""
    lam = np.where(grid.inside3, lam, 0.0)
    counts = rng.poisson(lam * grid.cell_volume)
    i, j, k = np.nonzero(counts)
    c = counts[i, j, k]
    i, j, k = (np.repeat(a, c) for a in (i, j, k))
    n = len(i)
    x = grid.xs[i] + (rng.uniform(size=n) - 0.5) * grid.dx
    y = grid.ys[j] + (rng.uniform(size=n) - 0.5) * grid.dy
    t = grid.ts[k] + (rng.uniform(size=n) - 0.5) * grid.dt
    pts = np.column_stack([x, y, t])
    if not grid.window.is_rectangle:
        pts = pts[grid.window.contains_xy(x, y)]
    return PointPattern(pts, grid.window, check=False)


def simulate_lgcp(model: LgcpModel, rng: np.random.Generator, window: Window | None = None) -> PointPattern:
    """One LGCP realisation; see :class:`LgcpSimulator` for repeated draws."""
    return LgcpSimulator(model, window).simulate(rng)


# ---------------------------------------------------------------------------
# cluster process


def simulate_neyman_scott(
    parent_density: np.ndarray | None,
    grid: Grid3,
    mean_parents: float,
    mean_offspring: float,
    sd_space: float,
    sd_time: float,
    rng: np.random.Generator,
) -> PointPattern:
    """
    Poisson parents with intensity proportional to ``parent_density`` (on
    ``grid`` cells; None for uniform), Poisson(mean_offspring) offspring per
    parent displaced by independent Gaussians. Offspring outside the window
    are dropped; parents themselves are not part of the pattern.
    """
    win = grid.window
    if parent_density is None:
        lam = np.where(grid.inside3, 1.0, 0.0)
    else:
        lam = np.where(grid.inside3, np.asarray(parent_density, dtype=float), 0.0)
    total = lam.sum() * grid.cell_volume
    if total <= 0:
        raise ValueError("parent density vanishes")
    parents = poisson_from_grid(lam * mean_parents / total, grid, rng).points
    k = rng.poisson(mean_offspring, size=len(parents))
    kids = np.repeat(parents, k, axis=0)
    kids[:, :2] += rng.normal(scale=sd_space, size=(len(kids), 2))
    kids[:, 2] += rng.normal(scale=sd_time, size=len(kids))
    kids = kids[win.contains(kids[:, 0], kids[:, 1], kids[:, 2])]
    return PointPattern(kids, win, check=False)
