"""
Observation windows, point patterns and evaluation grids.

A window is the product of a planar region (an axis-aligned rectangle or a
simple polygon) and a closed time interval. Everything downstream works on
these three objects, so they are kept small and immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Window",
    "PointPattern",
    "Grid3",
    "build_grid",
    "point_in_window",
    "points_in_region",
    "polygon_area",
    "read_window",
    "write_window",
]


def polygon_area(vertices) -> float:
    """Unsigned shoelace area of a polygon given as an (m, 2) vertex array."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2):
    """Vectorised test for intersection of segments p1-p2 and q1-q2."""

    def orient(a, b, c):
        return np.sign(
            (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
            - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
        )

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)

    def on_seg(a, b, c):
        return (
            (np.minimum(a[..., 0], b[..., 0]) <= c[..., 0])
            & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
            & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1])
            & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
        )

    touch = (
        ((o1 == 0) & on_seg(p1, p2, q1))
        | ((o2 == 0) & on_seg(p1, p2, q2))
        | ((o3 == 0) & on_seg(q1, q2, p1))
        | ((o4 == 0) & on_seg(q1, q2, p2))
    )
    return proper | touch


def _is_simple(vertices) -> bool:
    v = np.asarray(vertices, dtype=float)
    m = len(v)
    if m < 3:
        return False
    a, b = v, np.roll(v, -1, axis=0)
    for i in range(m):
        # skip the segment itself and its two neighbours
        j = np.arange(i + 2, m)
        if i == 0:
            j = j[j != m - 1]
        if j.size == 0:
            continue
        hits = _segments_cross(a[i], b[i], a[j], b[j])
        if np.any(hits):
            return False
    return True


def points_in_region(x, y, vertices) -> np.ndarray:
    """
    Boundary-inclusive point-in-polygon test by ray casting.

    Parameters
    ----------
    x, y : array_like
        Coordinates of the query points (broadcast together).
    vertices : (m, 2) array
        Polygon vertices in order, not repeated at the end.

    Returns
    -------
    ndarray of bool
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    v = np.asarray(vertices, dtype=float)
    flat_x, flat_y = x.ravel(), y.ravel()
    out = np.empty(flat_x.shape, dtype=bool)
    step = max(1, 2_000_000 // len(v))
    for lo in range(0, flat_x.size, step):
        out[lo : lo + step] = _in_polygon_block(flat_x[lo : lo + step], flat_y[lo : lo + step], v)
    return out.reshape(x.shape)


def _in_polygon_block(x, y, v):
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)

    xs = x[..., None]
    ys = y[..., None]
    crosses = (y0 > ys) != (y1 > ys)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
    inside = np.count_nonzero(crosses & (xs < xint), axis=-1) % 2 == 1

    # boundary: collinear with an edge and within its bounding box
    scale = max(np.ptp(x0), np.ptp(y0), 1.0)
    cross = (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0)
    seg_len = np.hypot(x1 - x0, y1 - y0)
    on_line = np.abs(cross) <= 1e-12 * scale * np.maximum(seg_len, 1e-300)
    in_box = (
        (xs >= np.minimum(x0, x1) - 1e-12 * scale)
        & (xs <= np.maximum(x0, x1) + 1e-12 * scale)
        & (ys >= np.minimum(y0, y1) - 1e-12 * scale)
        & (ys <= np.maximum(y0, y1) + 1e-12 * scale)
    )
    on_edge = np.any(on_line & in_box, axis=-1)
    return inside | on_edge


@dataclass(frozen=True)
class Window:
    """
    Spatio-temporal observation window W x T.

    Use :meth:`rectangle` or :meth:`polygon` to construct one.
    """

    t0: float
    t1: float
    rect: tuple[float, float, float, float] | None = None
    vertices: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.rect is None and self.vertices is None:
            raise ValueError("window needs a rectangle or a polygon")
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)) or self.t1 <= self.t0:
            raise ValueError("degenerate window: empty time interval")
        if self.rect is not None:
            xmin, xmax, ymin, ymax = self.rect
            if not (xmax > xmin and ymax > ymin):
                raise ValueError("degenerate window: empty rectangle")
        else:
            v = np.array(self.vertices, dtype=float)
            if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
                raise ValueError("polygon needs at least three (x, y) vertices")
            if np.allclose(v[0], v[-1]):
                v = v[:-1]
            v.setflags(write=False)
            object.__setattr__(self, "vertices", v)
            if polygon_area(v) <= 0:
                raise ValueError("degenerate window: zero polygon area")
            if not _is_simple(v):
                raise ValueError("polygon is not simple")

    @classmethod
    def rectangle(cls, xmin=0.0, xmax=1.0, ymin=0.0, ymax=1.0, t0=0.0, t1=1.0):
        return cls(t0=float(t0), t1=float(t1), rect=(float(xmin), float(xmax), float(ymin), float(ymax)))

    @classmethod
    def polygon(cls, vertices, t0=0.0, t1=1.0):
        return cls(t0=float(t0), t1=float(t1), vertices=np.asarray(vertices, dtype=float))

    @classmethod
    def unit_cube(cls):
        return cls.rectangle()

    @property
    def is_rectangle(self) -> bool:
        return self.rect is not None

    @property
    def area(self) -> float:
        if self.rect is not None:
            xmin, xmax, ymin, ymax = self.rect
            return (xmax - xmin) * (ymax - ymin)
        return polygon_area(self.vertices)

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def volume(self) -> float:
        return self.area * self.duration

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the spatial region."""
        if self.rect is not None:
            return self.rect
        v = self.vertices
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    def contains_xy(self, x, y) -> np.ndarray:
        """Spatial membership, boundary inclusive."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.rect is not None:
            xmin, xmax, ymin, ymax = self.rect
            return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        return points_in_region(x, y, self.vertices)

    def contains(self, x, y, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.contains_xy(x, y) & (t >= self.t0) & (t <= self.t1)

    def translated(self, dx=0.0, dy=0.0, dt=0.0) -> "Window":
        if self.rect is not None:
            xmin, xmax, ymin, ymax = self.rect
            return Window.rectangle(xmin + dx, xmax + dx, ymin + dy, ymax + dy, self.t0 + dt, self.t1 + dt)
        return Window.polygon(self.vertices + [dx, dy], self.t0 + dt, self.t1 + dt)

    def scaled(self, space=1.0, time=1.0) -> "Window":
        if self.rect is not None:
            return Window.rectangle(*(c * space for c in self.rect), self.t0 * time, self.t1 * time)
        return Window.polygon(self.vertices * space, self.t0 * time, self.t1 * time)

    def __eq__(self, other):
        if not isinstance(other, Window):
            return NotImplemented
        if (self.t0, self.t1, self.rect) != (other.t0, other.t1, other.rect):
            return False
        if self.vertices is None or other.vertices is None:
            return self.vertices is other.vertices
        return np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        vkey = None if self.vertices is None else self.vertices.tobytes()
        return hash((self.t0, self.t1, self.rect, vkey))


def point_in_window(p, window: Window) -> bool:
    """True iff the (x, y, t) point lies in W x T (boundary counts as inside)."""
    x, y, t = p
    return bool(window.contains(x, y, t))


class PointPattern:
    """
    Events (x, y, t) observed in a window.

    Parameters
    ----------
    points : (n, 3) array_like
        Event coordinates.
    window : Window
    check : bool
        Validate window membership and duplicate events (default True).
    """

    def __init__(self, points, window: Window, check: bool = True):
        pts = np.array(points, dtype=float).reshape(-1, 3)
        if check:
            if not np.all(np.isfinite(pts)):
                raise ValueError("non-finite coordinates in pattern")
            inside = window.contains(pts[:, 0], pts[:, 1], pts[:, 2])
            if not np.all(inside):
                bad = np.flatnonzero(~inside)
                raise ValueError(f"{bad.size} point(s) outside the window, e.g. index {bad[:5].tolist()}")
            if len(np.unique(pts, axis=0)) != len(pts):
                raise ValueError("pattern contains identical (x, y, t) events")
        pts.setflags(write=False)
        self.points = pts
        self.window = window

    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]

    @property
    def t(self):
        return self.points[:, 2]

    @property
    def xy(self):
        return self.points[:, :2]

    def with_times(self, t) -> "PointPattern":
        pts = self.points.copy()
        pts[:, 2] = t
        return PointPattern(pts, self.window, check=False)

    def __eq__(self, other):
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"PointPattern(n={self.n}, window={self.window!r})"


@dataclass(frozen=True, eq=False)
class Grid3:
    """
    Regular lattice of cells over the bounding box of W times [t0, t1].

    ``inside`` marks spatial cells whose centre lies in W. Cells are never
    clipped; instead the spatial quadrature weight ``cell_area`` spreads
    the exact area of W evenly over the inside cells, so the masked cells
    integrate a constant exactly even when boundary cells are cut.
    """

    window: Window
    xs: np.ndarray
    ys: np.ndarray
    ts: np.ndarray
    dx: float
    dy: float
    dt: float
    inside: np.ndarray

    @property
    def nx(self):
        return len(self.xs)

    @property
    def ny(self):
        return len(self.ys)

    @property
    def nt(self):
        return len(self.ts)

    @property
    def shape(self):
        return (self.nx, self.ny, self.nt)

    @property
    def cell_area(self):
        """Spatial quadrature weight |W| / (number of inside cells)."""
        if self.window.is_rectangle:
            return self.dx * self.dy
        n_in = int(np.count_nonzero(self.inside))
        return self.window.area / n_in if n_in else self.dx * self.dy

    @property
    def cell_length(self):
        return self.dt

    @property
    def cell_volume(self):
        return self.cell_area * self.dt

    @property
    def inside3(self) -> np.ndarray:
        return np.broadcast_to(self.inside[:, :, None], self.shape)

    def centers(self) -> np.ndarray:
        """(nx*ny*nt, 3) array of cell centres in C order."""
        X, Y, T = np.meshgrid(self.xs, self.ys, self.ts, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel(), T.ravel()])

    def spatial_centers(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def refine(self, factor: int) -> "Grid3":
        return build_grid(self.window, self.nx * factor, self.ny * factor, self.nt * factor)


def _midpoints(a, b, k):
    edges = np.linspace(a, b, k + 1)
    return 0.5 * (edges[:-1] + edges[1:]), (b - a) / k


def build_grid(window: Window, nx: int, ny: int, nt: int) -> Grid3:
    """Equal subdivision of the window's bounding box and time interval."""
    if min(nx, ny, nt) < 1:
        raise ValueError("grid dimensions must be at least 1")
    xmin, xmax, ymin, ymax = window.bbox
    if not (xmax > xmin and ymax > ymin and window.duration > 0):
        raise ValueError("degenerate window")
    xs, dx = _midpoints(xmin, xmax, nx)
    ys, dy = _midpoints(ymin, ymax, ny)
    ts, dt = _midpoints(window.t0, window.t1, nt)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = window.contains_xy(X, Y)
    for a in (xs, ys, ts, inside):
        a.setflags(write=False)
    return Grid3(window, xs, ys, ts, dx, dy, dt, inside)


def read_window(path) -> Window:
    """
    Read a window file.

    The first line is either ``rect xmin xmax ymin ymax tmin tmax`` or
    ``poly tmin tmax``; a polygon header is followed by one ``x y`` vertex
    per line.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty window file")
    head = lines[0].split()
    kind = head[0].lower()
    try:
        if kind == "rect":
            if len(head) != 7:
                raise ValueError("rect header needs 6 numbers")
            xmin, xmax, ymin, ymax, t0, t1 = map(float, head[1:])
            return Window.rectangle(xmin, xmax, ymin, ymax, t0, t1)
        if kind == "poly":
            if len(head) != 3:
                raise ValueError("poly header needs tmin tmax")
            t0, t1 = map(float, head[1:])
            verts = []
            for lineno, ln in enumerate(lines[1:], start=2):
                parts = ln.replace(",", " ").split()
                if len(parts) != 2:
                    raise ValueError(f"line {lineno}: expected 'x y'")
                verts.append([float(parts[0]), float(parts[1])])
            return Window.polygon(verts, t0, t1)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    raise ValueError(f"{path}: unknown window kind {head[0]!r}")


def write_window(window: Window, path) -> None:
    if window.is_rectangle:
        vals = [*window.rect, window.t0, window.t1]
        text = "rect " + " ".join(repr(float(v)) for v in vals) + "\n"
    else:
        rows = [f"poly {float(window.t0)!r} {float(window.t1)!r}"]
        rows += [f"{float(x)!r} {float(y)!r}" for x, y in window.vertices]
        text = "\n".join(rows) + "\n"
    Path(path).write_text(text)
