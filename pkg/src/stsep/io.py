"""
Reading and writing patterns, test results, grids and run manifests.

Floats are written with ``repr`` (shortest round-trip form), so parsing a
written file and writing it again reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

from .geometry import Grid3, PointPattern, Window

__all__ = [
    "DataError",
    "parse_pattern_csv",
    "write_pattern_csv",
    "result_to_dict",
    "write_result",
    "read_result",
    "write_grid_csv",
    "file_digest",
    "RunManifest",
]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def parse_pattern_csv(path, window: Window | None = None) -> PointPattern:
    """
    Read events from a CSV file with header exactly ``x,y,t``.

    Without a window the bounding box of the events (times included) is
    used. Errors carry the 1-based line number of the offending row.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "x,y,t":
            raise DataError(f"{path}:1: header must be 'x,y,t', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number in {line!r}") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(vals)
    pts = np.array(rows, dtype=float).reshape(-1, 3)
    if window is None:
        if len(pts) == 0:
            raise DataError(f"{path}: empty pattern and no window")
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        window = Window.rectangle(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2])
    inside = window.contains(pts[:, 0], pts[:, 1], pts[:, 2]) if len(pts) else np.ones(0, bool)
    if not np.all(inside):
        bad = np.flatnonzero(~inside)
        shown = ", ".join(f"line {i + 2}" for i in bad[:10])
        more = f" and {len(bad) - 10} more" if len(bad) > 10 else ""
        raise DataError(f"{path}: {len(bad)} point(s) outside the window: {shown}{more}")
    try:
        return PointPattern(pts, window)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None


def write_pattern_csv(pattern: PointPattern, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("x,y,t\n")
        for x, y, t in pattern.points:
            fh.write(f"{float(x)!r},{float(y)!r},{float(t)!r}\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(a) for a in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(a) for a in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(a) for k, a in v.items()}
    return v


def result_to_dict(result) -> dict:
    """Flat dictionary for a TestResult, ChiSqResult or plain mapping."""
    from .septest import ChiSqResult, TestResult

    if isinstance(result, dict):
        return _jsonable(result)
    if isinstance(result, ChiSqResult):
        return _jsonable({
            "test": "chisq",
            "statistic": result.statistic,
            "df": result.df,
            "p_value": result.p_value,
            "counts": result.counts,
            "expected": result.expected,
        })
    if isinstance(result, TestResult):
        out = {
            "test": result.method,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "alpha": result.alpha,
            "reject": result.reject,
            "n_replicates": result.n_replicates,
            "seed": result.seed,
            "grid": list(result.grid),
            "bandwidths": {"epsilon": result.bandwidths.epsilon, "delta": result.bandwidths.delta,
                           "method": result.bandwidths.method},
        }
        if result.envelope is not None:
            env = result.envelope
            out.update(data=env.data, low=env.low, upp=env.upp, exit_codes=env.exit_codes, index=result.index)
        elif result.values is not None:
            out["sd_values"] = result.values
        return _jsonable(out)
    raise TypeError(f"cannot serialise {type(result).__name__}")


def write_result(result, path) -> None:
    """JSON with sorted keys; floats in shortest round-trip form, NaN as null."""
    text = json.dumps(result_to_dict(result), sort_keys=True, indent=1, allow_nan=False)
    try:
        Path(path).write_text(text + "\n")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from None


def read_result(path) -> dict:
    return json.loads(Path(path).read_text())


def write_grid_csv(path, grid: Grid3, values, index=None, kind: str = "st") -> None:
    """
    Long-format export ``x,y,t,value``.

    ``kind`` is ``st`` for flat indices into the (nx, ny, nt) grid,
    ``space`` for (nx, ny) (t left empty) and ``time`` for (nt,) (x, y
    left empty). Without ``index`` every cell is written.
    """
    values = np.ravel(values)
    if index is None:
        index = np.arange(values.size)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "t", "value"])
        if kind == "st":
            i, j, k = np.unravel_index(index, grid.shape)
            cols = (grid.xs[i], grid.ys[j], grid.ts[k])
        elif kind == "space":
            i, j = np.unravel_index(index, (grid.nx, grid.ny))
            cols = (grid.xs[i], grid.ys[j], [None] * len(index))
        elif kind == "time":
            cols = ([None] * len(index), [None] * len(index), grid.ts[index])
        else:
            raise ValueError(f"unknown grid kind {kind!r}")
        for x, y, t, v in zip(*cols, values):
            w.writerow(["" if a is None else repr(float(a)) for a in (x, y, t)] + [repr(float(v))])


def file_digest(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Provenance record written next to the outputs of a CLI run."""

    def __init__(self, argv, config: dict, seed, inputs=()):
        self.argv = list(argv)
        self.config = _jsonable(config)
        self.seed = seed
        self.inputs = {str(p): file_digest(p) for p in inputs}
        self._start = time.perf_counter()

    @property
    def config_digest(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_dict(self, wall_time=None) -> dict:
        import matplotlib
        import scipy

        from . import __version__

        return {
            "command": self.argv,
            "config": self.config,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "inputs": self.inputs,
            "versions": {
                "stsep": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "matplotlib": matplotlib.__version__,
            },
            "wall_time_s": time.perf_counter() - self._start if wall_time is None else wall_time,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

