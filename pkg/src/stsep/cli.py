"""
Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every run writes its files into ``--out`` (default: current directory) and
prints tab-separated ``key<TAB>value`` lines on stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io as sio
from .geometry import build_grid, read_window, write_window
from .kernels import estimate_intensity, resolve_bandwidths

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _triple(s: str) -> tuple[int, int, int]:
    try:
        v = tuple(int(a) for a in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three integers like 25,25,20, got {s!r}") from None
    if len(v) != 3 or min(v) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers, got {s!r}")
    return v


def _floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(a) for a in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _emit(pairs):
    for k, v in pairs:
        if isinstance(v, float):
            v = repr(v)
        print(f"{k}\t{v}")


def _config(factory, **kw):
    """Build a config object; invalid settings are usage errors."""
    try:
        return factory(**kw)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args) -> int:
    from .experiment import default_threads

    return default_threads(args.threads)


def _load(args):
    try:
        window = read_window(args.window)
    except (OSError, ValueError) as e:
        raise sio.DataError(f"{args.window}: {e}") from None
    return sio.parse_pattern_csv(args.pattern, window)


def _bandwidths(args, pattern):
    method = {"auto": "rule-of-thumb", "cv": "likelihood-CV"}[args.bw]
    return resolve_bandwidths(pattern, args.bw_space, args.bw_time, method)


def _manifest(args, argv, config, inputs=()):
    return sio.RunManifest(argv, config, args.seed, inputs)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, argv):
    from .septest import replicate_rng
    from .sim import LgcpModel, LgcpSimulator, burst_model, simulate_burst

    rng = replicate_rng(args.seed, 0)
    if args.model == "burst":
        model = burst_model(args.case, args.gamma, args.target_n, base_sd=args.base_sd)
        pattern = simulate_burst(model, rng)
        config = {"model": "burst", "case": args.case, "gamma": args.gamma, "nu": model.nu, "base_sd": args.base_sd}
    else:
        model = LgcpModel(beta0=args.beta0, beta1=args.beta1, gamma_prime=args.gamma_prime,
                          gamma_dprime=args.gamma_dprime, sigma1=args.sigma1, sigma2=args.sigma2,
                          phi1=args.phi1, phi2=args.phi2, grid_dims=args.grid)
        pattern = LgcpSimulator(model).simulate(rng)
        config = {"model": "lgcp", **asdict(model)}
    out = _outdir(args)
    target = out / args.output
    sio.write_pattern_csv(pattern, target)
    window_path = target.with_suffix(".window.txt")
    write_window(pattern.window, window_path)
    _manifest(args, argv, config).write(out / "manifest.json")
    _emit([("pattern", str(target)), ("window", str(window_path)), ("n", pattern.n)])


def cmd_estimate(args, argv):
    from .plotting import plot_intensity

    pattern = _load(args)
    bw = _bandwidths(args, pattern)
    grid = build_grid(pattern.window, *args.grid)
    fld = estimate_intensity(pattern, bw, grid)
    out = _outdir(args)
    sio.write_grid_csv(out / "rho_st.csv", grid, fld.rho_st)
    sio.write_grid_csv(out / "rho_sep.csv", grid, fld.rho_sep)
    sio.write_grid_csv(out / "rho_space.csv", grid, fld.rho_space, kind="space")
    sio.write_grid_csv(out / "rho_time.csv", grid, fld.rho_time, kind="time")
    plot_intensity(fld, out / "intensity.png")
    _manifest(args, argv, {"grid": args.grid, "epsilon": bw.epsilon, "delta": bw.delta},
              (args.pattern, args.window)).write(out / "manifest.json")
    mass = fld.mass()
    _emit([("n", pattern.n), ("epsilon", bw.epsilon), ("delta", bw.delta)] + [(f"mass_{k}", float(v)) for k, v in mass.items()])


def _write_test_outputs(out: Path, res, grid, stem: str):
    from .plotting import plot_envelope_1d, plot_exit_slices

    sio.write_result(res, out / f"{stem}.json")
    env = res.envelope
    if env is None:
        return
    kind = {"S": "st", "Sspace": "space", "Stime": "time"}[res.statistic]
    sio.write_grid_csv(out / f"{stem}_data.csv", grid, env.data, res.index, kind)
    sio.write_grid_csv(out / f"{stem}_exit.csv", grid, env.exit_codes, res.index, kind)
    if res.statistic == "S":
        plot_exit_slices(res, grid, out / f"{stem}.png")
    else:
        plot_envelope_1d(res, grid, out / f"{stem}.png", "time" if res.statistic == "Stime" else "space")


def _summary(res):
    return [("statistic", res.statistic), ("p_value", float(res.p_value)), ("alpha", res.alpha),
            ("reject", int(res.reject)), ("replicates", res.n_replicates),
            ("epsilon", res.bandwidths.epsilon), ("delta", res.bandwidths.delta)]


def cmd_test_perm(args, argv):
    from .septest import PermTestConfig, run_permutation_test

    pattern = _load(args)
    bw = _bandwidths(args, pattern)
    cfg = _config(PermTestConfig, n_perm=args.nperm, statistic=args.stat, grid=args.grid, epsilon=bw.epsilon,
                  delta=bw.delta, alpha=args.alpha, seed=args.seed)
    res = run_permutation_test(pattern, cfg)
    out = _outdir(args)
    _write_test_outputs(out, res, build_grid(pattern.window, *args.grid), f"perm_{args.stat}")
    _manifest(args, argv, asdict(cfg), (args.pattern, args.window)).write(out / "manifest.json")
    _emit(_summary(res))


def cmd_test_chisq(args, argv):
    from .septest import chisq_test

    pattern = _load(args)
    res = chisq_test(pattern, *args.cells)
    out = _outdir(args)
    sio.write_result(res, out / "chisq.json")
    _manifest(args, argv, {"cells": args.cells}, (args.pattern, args.window)).write(out / "manifest.json")
    _emit([("statistic", res.statistic), ("df", res.df), ("p_value", res.p_value)])


def _recon_config(args):
    from .recon import ReconConfig

    try:
        cfg = ReconConfig.from_file(args.config) if args.config else ReconConfig()
        updates = {"seed": args.seed}
        if args.max_iter is not None:
            updates["max_iter"] = args.max_iter
        return replace(cfg, **updates)
    except OSError as e:
        raise sio.DataError(str(e)) from None
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_test_recon(args, argv):
    from .recon import run_reconstruction_test
    from .septest import PermTestConfig

    pattern = _load(args)
    bw = _bandwidths(args, pattern)
    rcfg = replace(_recon_config(args), epsilon=bw.epsilon, delta=bw.delta)
    cfg = _config(PermTestConfig, n_perm=args.nperm, statistic=args.stat, grid=args.grid, epsilon=bw.epsilon,
                  delta=bw.delta, alpha=args.alpha, seed=args.seed)
    res = run_reconstruction_test(pattern, rcfg, cfg, threads=_threads(args))
    out = _outdir(args)
    _write_test_outputs(out, res, build_grid(pattern.window, *args.grid), f"recon_{args.stat}")
    inputs = [args.pattern, args.window] + ([args.config] if args.config else [])
    _manifest(args, argv, {"test": asdict(cfg), "recon": asdict(rcfg)}, inputs).write(out / "manifest.json")
    _emit(_summary(res))


def cmd_reconstruct(args, argv):
    from .plotting import plot_energy_trace
    from .recon import ReconContext, reconstruct
    from .septest import replicate_rng

    pattern = _load(args)
    bw = _bandwidths(args, pattern)
    rcfg = replace(_recon_config(args), epsilon=bw.epsilon, delta=bw.delta)
    ctx = ReconContext(pattern, rcfg, bw)
    out = _outdir(args)
    finals = []
    if _threads(args) > 1 and args.n > 1:
        from .recon import reconstructions

        pats = reconstructions(pattern, rcfg, args.n, args.seed, _threads(args))
        for i, y in enumerate(pats, start=1):
            sio.write_pattern_csv(y, out / f"recon_{i:04d}.csv")
            finals.append(ctx.energy(y))
    else:
        for i in range(1, args.n + 1):
            res = reconstruct(pattern, rcfg, replicate_rng(args.seed, i), ctx, return_trace=True)
            sio.write_pattern_csv(res.pattern, out / f"recon_{i:04d}.csv")
            finals.append(res.final_energy)
            if i == 1:
                plot_energy_trace(res.energies, out / "energy_trace.png")
    inputs = [args.pattern, args.window] + ([args.config] if args.config else [])
    _manifest(args, argv, asdict(rcfg), inputs).write(out / "manifest.json")
    _emit([("reconstructions", args.n), ("median_final_energy", float(np.median(finals)) if finals else 0.0)])


def cmd_experiment(args, argv):
    from .experiment import ExperimentPlan, format_table, run_experiment

    plan = _config(
        ExperimentPlan, model=args.model, case=args.case, gammas=args.gammas, reps=args.reps, n_perm=args.nperm,
        alpha=args.alpha, grid=args.grid, cells=args.cells, epsilon=args.bw_space, delta=args.bw_time,
        bw_method={"auto": "rule-of-thumb", "cv": "likelihood-CV"}[args.bw], target_n=args.target_n,
        base_sd=args.base_sd, beta0=args.beta0, gamma_dprime=args.gamma_dprime, seed=args.seed,
    )
    rows = run_experiment(plan, threads=_threads(args))
    out = _outdir(args)
    sio.write_result({"plan": asdict(plan), "rows": [r.as_dict() for r in rows]},
                     out / "experiment.json")
    _manifest(args, argv, asdict(plan)).write(out / "manifest.json")
    table = format_table(rows)
    if table:
        print(table)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base random seed")
    common.add_argument("--threads", type=int, default=None, help="worker processes (fallback: STSEP_THREADS)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    bw = _Parser(add_help=False)
    bw.add_argument("--bw-space", type=float, default=None, help="fixed spatial bandwidth")
    bw.add_argument("--bw-time", type=float, default=None, help="fixed temporal bandwidth")
    bw.add_argument("--bw", choices=("auto", "cv"), default="auto", help="selector for bandwidths not fixed")

    data = _Parser(add_help=False)
    data.add_argument("pattern", help="CSV with header x,y,t")
    data.add_argument("window", help="window file")

    p = _Parser(prog="stsep", description="First-order separability tests for spatio-temporal point patterns.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    sim = sub.add_parser("simulate", help="simulate a model pattern")
    simsub = sim.add_subparsers(dest="model", parser_class=_Parser, required=True)
    sb = simsub.add_parser("burst", parents=[common])
    sb.add_argument("--case", choices=("i", "ii", "iii", "iv"), default="i")
    sb.add_argument("--gamma", type=float, default=0.0)
    sb.add_argument("--target-n", type=float, default=600.0)
    sb.add_argument("--base-sd", type=float, default=0.2)
    sb.add_argument("-o", "--output", default="pattern.csv")
    sl = simsub.add_parser("lgcp", parents=[common])
    for name, default in (("beta0", 5.05), ("beta1", 0.25), ("gamma-prime", 0.0), ("gamma-dprime", 0.0),
                          ("sigma1", 0.5), ("sigma2", 0.5), ("phi1", 0.06), ("phi2", 0.05)):
        sl.add_argument(f"--{name}", type=float, default=default)
    sl.add_argument("--grid", type=_triple, default=(20, 20, 20))
    sl.add_argument("-o", "--output", default="pattern.csv")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", parents=[common, bw, data], help="intensity estimates on a grid")
    est.add_argument("--grid", type=_triple, default=(25, 25, 20))
    est.set_defaults(func=cmd_estimate)

    test = sub.add_parser("test", help="separability tests")
    tsub = test.add_subparsers(dest="test", parser_class=_Parser, required=True)
    tp = tsub.add_parser("perm", parents=[common, bw, data])
    tc = tsub.add_parser("chisq", parents=[common, data])
    tr = tsub.add_parser("recon", parents=[common, bw, data])
    for t in (tp, tr):
        t.add_argument("--stat", choices=("S", "Sspace", "Stime", "Sd"), default="S")
        t.add_argument("--nperm", type=int, default=1999)
        t.add_argument("--alpha", type=float, default=0.05)
        t.add_argument("--grid", type=_triple, default=(25, 25, 20))
    tr.add_argument("--config", default=None, help="reconstruction config (key = value)")
    tr.add_argument("--max-iter", type=int, default=None)
    tc.add_argument("--cells", type=_triple, default=(4, 4, 4))
    tp.set_defaults(func=cmd_test_perm)
    tc.set_defaults(func=cmd_test_chisq)
    tr.set_defaults(func=cmd_test_recon)

    rc = sub.add_parser("reconstruct", parents=[common, bw, data], help="stochastic reconstructions")
    rc.add_argument("--config", default=None)
    rc.add_argument("-n", type=int, default=1)
    rc.add_argument("--max-iter", type=int, default=None)
    rc.add_argument("-o", dest="out", help="output directory (same as --out)")
    rc.set_defaults(func=cmd_reconstruct)

    ex = sub.add_parser("experiment", parents=[common, bw], help="rejection-rate table")
    ex.add_argument("--model", choices=("burst", "lgcp"), default="burst")
    ex.add_argument("--case", choices=("i", "ii", "iii", "iv"), default="i")
    ex.add_argument("--gammas", type=_floats, default=(0.0,))
    ex.add_argument("--reps", type=int, default=100)
    ex.add_argument("--nperm", type=int, default=199)
    ex.add_argument("--alpha", type=float, default=0.05)
    ex.add_argument("--grid", type=_triple, default=(25, 25, 20))
    ex.add_argument("--cells", type=_triple, default=(4, 4, 4))
    ex.add_argument("--target-n", type=float, default=600.0)
    ex.add_argument("--base-sd", type=float, default=0.2)
    ex.add_argument("--beta0", type=float, default=5.05)
    ex.add_argument("--gamma-dprime", type=float, default=0.0)
    ex.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, ["stsep", *argv])
    except (sio.DataError, FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"stsep: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except UsageError as e:
        print(f"stsep: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"stsep: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
