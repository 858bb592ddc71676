"""
Rejection-rate experiments: simulate from a model, test, count rejections.

Repetition r of configuration c draws from the stream (seed, c, r), so the
table does not depend on how repetitions are scheduled across processes.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Window
from .septest import PermTestConfig, chisq_test, run_permutation_tests
from .sim import LgcpModel, LgcpSimulator, burst_model, simulate_burst

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentPlan:
    """
    One experiment table.

    ``model`` is ``burst`` (``case`` i-iv, ``gammas`` are burst weights) or
    ``lgcp`` (``gammas`` are the interaction coefficients gamma', with
    ``gamma_dprime`` and ``beta0`` fixed).
    """

    model: str = "burst"
    case: str = "i"
    gammas: tuple = (0.0,)
    reps: int = 100
    n_perm: int = 199
    alpha: float = 0.05
    grid: tuple[int, int, int] = (25, 25, 20)
    cells: tuple[int, int, int] = (4, 4, 4)
    statistics: tuple = ("S", "Sspace", "Stime", "Sd")
    epsilon: float | None = None
    delta: float | None = None
    bw_method: str = "rule-of-thumb"
    target_n: float = 600.0
    base_sd: float = 0.2
    beta0: float = 5.05
    gamma_dprime: float = 0.0
    lgcp: dict = field(default_factory=dict)
    chisq: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("burst", "lgcp"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.reps < 0:
            raise ValueError("reps must be non-negative")


@dataclass
class ExperimentRow:
    model: str
    gamma: float
    n_bar: float
    rates: dict  # test name -> rejection proportion
    reps: int
    failures: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"model": self.model, "gamma": self.gamma, "n_bar": self.n_bar, "reps": self.reps}
        d.update(self.rates)
        return d


def _simulator(plan: ExperimentPlan, gamma: float):
    if plan.model == "burst":
        m = burst_model(plan.case, gamma, plan.target_n, base_sd=plan.base_sd)
        return lambda rng: simulate_burst(m, rng)
    m = LgcpModel(beta0=plan.beta0, gamma_prime=gamma, gamma_dprime=plan.gamma_dprime, **plan.lgcp)
    sim = LgcpSimulator(m, Window.unit_cube())
    return sim.simulate


def one_repetition(plan: ExperimentPlan, c: int, r: int, simulate=None) -> dict:
    """Simulate and test once; returns n and a p-value per test (NaN on failure)."""
    rng = np.random.default_rng([int(plan.seed), int(c), int(r)])
    simulate = _simulator(plan, plan.gammas[c]) if simulate is None else simulate
    pattern = simulate(rng)
    out = {"n": pattern.n}
    cfg = PermTestConfig(
        n_perm=plan.n_perm, grid=tuple(plan.grid), epsilon=plan.epsilon, delta=plan.delta,
        bw_method=plan.bw_method, alpha=plan.alpha, seed=int(rng.integers(2**63)),
    )
    try:
        res = run_permutation_tests(pattern, cfg, plan.statistics)
        out.update({st: res[st].p_value for st in plan.statistics})
    except ValueError as e:
        _logger.warning("permutation test failed (config %d rep %d): %s", c, r, e)
        out.update({st: np.nan for st in plan.statistics})
    if plan.chisq:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out["chisq"] = chisq_test(pattern, *plan.cells).p_value
        except ValueError as e:
            _logger.warning("chi-square test failed (config %d rep %d): %s", c, r, e)
            out["chisq"] = np.nan
    return out


def _job(args):
    plan, c, r = args
    return one_repetition(plan, c, r)


def run_experiment(plan: ExperimentPlan, threads: int = 1, progress=None) -> list[ExperimentRow]:
    """
    Rejection proportions for every value in ``plan.gammas``.

    Failed tests (degenerate estimates or partitions) are left out of the
    denominator and counted in ``ExperimentRow.failures``.
    """
    rows = []
    if plan.reps == 0:
        return rows
    tests = list(plan.statistics) + (["chisq"] if plan.chisq else [])
    for c, gamma in enumerate(plan.gammas):
        if threads > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=threads) as ex:
                reps = list(ex.map(_job, [(plan, c, r) for r in range(plan.reps)], chunksize=4))
        else:
            sim = _simulator(plan, gamma)
            reps = []
            for r in range(plan.reps):
                reps.append(one_repetition(plan, c, r, sim))
                if progress:
                    progress(c, r)
        ns = np.array([d["n"] for d in reps], dtype=float)
        rates, fails = {}, {}
        for t in tests:
            p = np.array([d[t] for d in reps], dtype=float)
            ok = np.isfinite(p)
            fails[t] = int((~ok).sum())
            rates[t] = float(np.mean(p[ok] <= plan.alpha)) if ok.any() else float("nan")
        rows.append(ExperimentRow(plan.model, float(gamma), float(ns.mean()), rates, plan.reps, fails))
    return rows


def format_table(rows: list[ExperimentRow]) -> str:
    """Plain-text table in the layout of a rejection-rate table."""
    if not rows:
        return ""
    tests = list(rows[0].rates)
    head = ["model", "gamma", "n_bar"] + tests
    lines = ["\t".join(head)]
    for r in rows:
        lines.append("\t".join([r.model, f"{r.gamma:g}", f"{r.n_bar:.1f}"] + [f"{r.rates[t]:.3f}" for t in tests]))
    return "\n".join(lines)


def default_threads(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("STSEP_THREADS")
    return max(1, int(env)) if env else 1


__all__ = ["ExperimentPlan", "ExperimentRow", "run_experiment", "one_repetition", "format_table", "default_threads"]
