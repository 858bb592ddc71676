"""Static figures for CLI reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Grid3, PointPattern  # noqa: E402


def _outline(ax, window):
    if window.is_rectangle:
        xmin, xmax, ymin, ymax = window.rect
        v = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax], [xmin, ymin]])
    else:
        v = np.vstack([window.vertices, window.vertices[:1]])
    ax.plot(v[:, 0], v[:, 1], color="0.3", lw=0.8)


def plot_pattern(pattern: PointPattern, path) -> Path:
    """Locations coloured by time, with the window outline."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    sc = ax.scatter(pattern.x, pattern.y, c=pattern.t, s=8, cmap="viridis")
    _outline(ax, pattern.window)
    fig.colorbar(sc, ax=ax, label="t")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_envelope_1d(result, grid: Grid3, path, kind: str = "time") -> Path:
    """Data curve and global envelope for S_time, or S_space flattened by cell."""
    env = result.envelope
    if kind == "time":
        xs = grid.ts[result.index]
        label = "t"
    else:
        xs = np.arange(len(env.data))
        label = "spatial cell"
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.fill_between(xs, env.low, env.upp, color="0.85", step="mid", label="envelope")
    ax.plot(xs, env.data, color="k", lw=1, label="data")
    out = env.above | env.below
    ax.plot(xs[out], env.data[out], "o", color="tab:red", ms=3, label="outside")
    ax.set_xlabel(label)
    ax.set_title(f"{result.statistic}: p = {result.p_value:.4g}")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_exit_slices(result, grid: Grid3, path, n_panels: int = 4) -> Path:
    """Exit codes of S (above +1, below -1) on a few time slices."""
    codes = np.full(grid.shape, np.nan)
    codes.ravel()[result.index] = result.envelope.exit_codes
    ks = np.unique(np.linspace(0, grid.nt - 1, min(n_panels, grid.nt)).round().astype(int))
    fig, axes = plt.subplots(1, len(ks), figsize=(2.6 * len(ks), 2.8), squeeze=False)
    ext = (grid.xs[0] - grid.dx / 2, grid.xs[-1] + grid.dx / 2, grid.ys[0] - grid.dy / 2, grid.ys[-1] + grid.dy / 2)
    for ax, k in zip(axes[0], ks):
        ax.imshow(codes[:, :, k].T, origin="lower", extent=ext, vmin=-1, vmax=1, cmap="coolwarm")
        _outline(ax, grid.window)
        ax.set_title(f"t = {grid.ts[k]:.3g}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle(f"S exits (p = {result.p_value:.4g})", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_intensity(fld, path) -> Path:
    """Spatial and temporal marginal estimates side by side."""
    g = fld.grid
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    sp = np.where(g.inside, fld.rho_space, np.nan)
    ext = (g.xs[0] - g.dx / 2, g.xs[-1] + g.dx / 2, g.ys[0] - g.dy / 2, g.ys[-1] + g.dy / 2)
    im = a1.imshow(sp.T, origin="lower", extent=ext, cmap="magma")
    fig.colorbar(im, ax=a1)
    _outline(a1, g.window)
    a1.set_title("spatial intensity")
    a2.plot(g.ts, fld.rho_time, color="k")
    a2.set_xlabel("t")
    a2.set_title("temporal intensity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_energy_trace(energies, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy(np.arange(len(energies)), np.maximum(energies, 1e-300), color="k", lw=1)
    ax.set_xlabel("accepted step")
    ax.set_ylabel("energy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
