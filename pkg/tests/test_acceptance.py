"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The Monte Carlo criteria run at desk scale (hundreds of repetitions). Set
STSEP_THREADS to spread repetitions over processes. Criterion 11 needs the
outbreak data: STSEP_FMD_CSV (x,y,t events) and STSEP_FMD_WINDOW (window
file).
"""

import itertools
import os

import numpy as np
import pytest

from stsep.envelope import RankMatrix, envelope_test, erl_measures
from stsep.experiment import ExperimentPlan, default_threads, run_experiment
from stsep.geometry import PointPattern, Window, build_grid, read_window
from stsep.kernels import estimate_intensity, resolve_bandwidths
from stsep.recon import ReconConfig, ReconContext, reconstruct
from stsep.septest import PermTestConfig, chisq_from_counts, chisq_tail, chisq_test, run_permutation_test
from stsep.sim import gaussian_cov, kron_factor, simulate_grf_kronecker, simulate_neyman_scott, uniform_in_window

pytestmark = pytest.mark.slow

THREADS = default_threads()
BAND_200 = (0.020, 0.085)


def _rates(**kw):
    return run_experiment(ExperimentPlan(seed=0, **kw), threads=THREADS)


def test_criterion_1_level(report):
    (row,) = _rates(case="i", gammas=(0.0,), reps=200, n_perm=199, grid=(25, 25, 20), statistics=("S",))
    s, c = row.rates["S"], row.rates["chisq"]
    ok = all(BAND_200[0] <= v <= BAND_200[1] for v in (s, c))
    report(1, ok, f"model i gamma=0, 200 reps, n_bar={row.n_bar:.1f}: S {s:.3f}, chisq {c:.3f} (band {BAND_200})")


def test_criterion_2_power(report):
    (row,) = _rates(case="i", gammas=(200.0,), reps=100, n_perm=199, statistics=("S", "Sd"))
    r = row.rates
    ok = min(r["S"], r["Sd"], r["chisq"]) >= 0.95
    report(2, ok, f"model i gamma=200, 100 reps: S {r['S']:.3f}, Sd {r['Sd']:.3f}, chisq {r['chisq']:.3f} (>= 0.95)")


def test_criterion_3_power_ordering(report):
    (row,) = _rates(case="ii", gammas=(25.0,), reps=200, n_perm=199, statistics=("S", "Sspace"), chisq=False)
    r = row.rates
    gap = r["S"] - r["Sspace"]
    report(3, gap >= 0.5, f"model ii gamma=25, 200 reps: S {r['S']:.3f}, Sspace {r['Sspace']:.3f}, gap {gap:.3f} (>= 0.5)")


def test_criterion_4_lgcp_level(report):
    # (gamma'', beta0, small spatial and temporal bandwidths)
    settings = [(0.0, 5.05, 0.053, 0.069), (0.5, 5.00, 0.052, 0.067), (1.0, 4.9, 0.048, 0.061)]
    level = {}
    for gd, b0, eps, dlt in settings:
        (row,) = _rates(model="lgcp", gammas=(0.0,), gamma_dprime=gd, beta0=b0, epsilon=eps, delta=dlt, reps=200,
                        n_perm=99, grid=(20, 20, 20), statistics=("S",), chisq=False)
        level[gd] = row.rates["S"]
    ok = BAND_200[0] <= level[0.0] <= BAND_200[1] and level[1.0] >= 2 * level[0.0]
    detail = ", ".join(f"gamma''={k:g}: {v:.3f}" for k, v in level.items())
    report(4, ok, f"LGCP level, 200 reps: {detail} (gamma''=0 in band, gamma''=1 >= 2x)")


def test_criterion_5_chisq_values(report):
    res = chisq_from_counts([[10, 20], [30, 40]])
    # brute force: expected counts from the margins, summed by hand
    n, rows, cols = 100.0, (30.0, 70.0), (40.0, 60.0)
    obs = ((10, 20), (30, 40))
    brute = sum((obs[i][j] - rows[i] * cols[j] / n) ** 2 / (rows[i] * cols[j] / n) for i in range(2) for j in range(2))
    tails = [abs(chisq_tail(x, 2) - np.exp(-x / 2)) for x in (0.1, 1.0, 10.0)]
    ok = abs(res.statistic - 0.7937) <= 1e-4 and abs(res.statistic - brute) <= 1e-12 and res.df == 1
    ok = ok and max(tails) <= 1e-12
    report(5, ok, f"chi2={res.statistic:.6f} df={res.df}, max tail error {max(tails):.1e}")


def _brute_measures(r):
    """O(n^2 d) pairwise lexicographic comparison of row-sorted rank vectors."""
    r = np.sort(r, axis=1)
    s = len(r)
    out = np.zeros(s)
    for i in range(s):
        for j in range(s):
            for a, b in zip(r[j], r[i]):
                if a != b:
                    out[i] += a < b
                    break
    return out / s


def _brute_measures_vec(r):
    """Same pairwise comparison, vectorised: the first differing position decides."""
    diff = r[None, :, :] - r[:, None, :]  # [i, j] = row j - row i
    nz = diff != 0
    first = nz.argmax(-1)
    sign = np.take_along_axis(diff, first[..., None], -1)[..., 0]
    return (nz.any(-1) & (sign < 0)).sum(1) / len(r)


def test_criterion_6_erl_exhaustive(report):
    # The measure reads only row-sorted ranks, so every matrix over {1,2,3} maps to a sequence of
    # sorted rows; enumerating all such sequences covers every matrix. Sorting is checked separately.
    checked, mismatches = 0, 0
    for d in (1, 2, 3):
        sorted_rows = list(itertools.combinations_with_replacement((1, 2, 3), d))
        for s in range(1, 7):
            for seq in itertools.product(sorted_rows, repeat=s):
                r = np.array(seq)
                got = erl_measures(RankMatrix(r, r))
                mismatches += not np.array_equal(got, _brute_measures_vec(r))
                checked += 1
    rng = np.random.default_rng(0)
    for _ in range(2000):
        raw = rng.integers(1, 4, size=(int(rng.integers(1, 7)), int(rng.integers(1, 4))))
        srt = np.sort(raw, axis=1)
        got = erl_measures(RankMatrix(raw, srt))
        mismatches += not (np.array_equal(got, _brute_measures(raw)) and np.array_equal(got, _brute_measures_vec(srt)))
    report(6, mismatches == 0, f"{checked} row-sorted matrices (n+1 <= 6, d <= 3) plus 2000 unsorted: {mismatches} mismatches")


def test_criterion_7_envelope_exactness(report):
    rng = np.random.default_rng(0)
    rejects = sum(envelope_test(rng.standard_normal((100, 50)), 0.05).reject for _ in range(500))
    rate = rejects / 500
    report(7, 0.033 <= rate <= 0.071, f"500 noise tests (99+1, d=50): rejection rate {rate:.3f} (band [0.033, 0.071])")


def _star(rng):
    while True:
        k = int(rng.integers(5, 9))
        a = np.sort(rng.uniform(0, 2 * np.pi, k))
        r = rng.uniform(0.7, 1.0, k)
        try:
            return Window.polygon(np.column_stack([r * np.cos(a), r * np.sin(a)]), 0, rng.uniform(0.5, 3))
        except ValueError:
            continue


def test_criterion_8_mass_conservation(report):
    rng = np.random.default_rng(0)
    lshape = Window.polygon([(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)])
    hexagon = Window.polygon([(2 * np.cos(a), np.sin(a)) for a in np.arange(6) * np.pi / 3], 0, 2)
    worst, kinds = 0.0, set()
    for i in range(50):
        kind = ("rectangle", "lshape", "hexagon", "star")[i % 4]
        w = {
            "rectangle": lambda: Window.rectangle(0, rng.uniform(0.5, 3), 0, rng.uniform(0.5, 3), 0, rng.uniform(0.5, 3)),
            "lshape": lambda: lshape,
            "hexagon": lambda: hexagon,
            "star": lambda: _star(rng),
        }[kind]()
        n = int(rng.integers(50, 1001))
        if i % 3 == 2:
            p = PointPattern(np.zeros((0, 3)), w)
            while not 50 <= p.n <= 1000:
                p = simulate_neyman_scott(None, build_grid(w, 10, 10, 10), n / 5, 5, 0.05, 0.05 * w.duration, rng)
        else:
            p = PointPattern(uniform_in_window(w, n, rng), w)
        m = estimate_intensity(p, resolve_bandwidths(p), build_grid(w, 50, 50, 20)).mass()
        worst = max(worst, max(abs(v / p.n - 1) for v in m.values()))
        kinds.add(kind)
    report(8, worst <= 0.02, f"50 patterns on {sorted(kinds)}: worst relative mass error {worst:.4f} (<= 0.02)")


def test_criterion_9_kronecker(report):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        mats = []
        for k in (3, 4):
            a = rng.standard_normal((k, k))
            mats.append(np.linalg.cholesky(a @ a.T + k * np.eye(k)))
        l1, l2 = mats
        kf = kron_factor(l1, l2)
        target = np.kron(l1 @ l1.T, l2 @ l2.T)
        worst = max(worst, np.abs(kf @ kf.T - target).max() / np.abs(target).max())
    phi1 = 0.06
    g = build_grid(Window.unit_cube(), 20, 20, 1)
    z = simulate_grf_kronecker(gaussian_cov(phi1), None, g, rng, size=2000)
    i0, j0 = 3, 10
    lag_ok = []
    for k in (1, 2, 3, 4, 6):
        h = g.xs[i0 + k] - g.xs[i0]
        prod = z[:, i0, j0] * z[:, i0 + k, j0]
        se = prod.std(ddof=1) / np.sqrt(len(prod))
        lag_ok.append(abs(prod.mean() - np.exp(-h**2 / phi1)) <= 3 * se)
    ok = worst <= 1e-12 and all(lag_ok)
    report(9, ok, f"Kronecker identity rel. error {worst:.1e}; lag covariances within 3 SE at {sum(lag_ok)}/5 lags")


RECON_MODEL = dict(mean_parents=66, mean_offspring=5, sd_space=0.03, sd_time=0.03)
RECON_CONFIG = ReconConfig(t_k=0.15, r_k=0.15, t_d=0.1, r_d=0.1, w_k=1e6, w_dk=300.0, w_delta=1e-4, grid=(20, 20, 10),
                           n_lag=20, max_iter=3000, max_consecutive_rejects=10**9)


def test_criterion_10_reconstruction(report):
    g = build_grid(Window.unit_cube(), 10, 10, 10)

    def model(rng):
        return simulate_neyman_scott(None, g, rng=rng, **RECON_MODEL)

    X = model(np.random.default_rng(0))
    ctx = ReconContext(X, RECON_CONFIG)
    Ks = np.array([ctx.summaries(model(np.random.default_rng([1, i]))).K for i in range(199)])
    lo, hi = Ks.min(axis=0), Ks.max(axis=0)
    contract, covered = 0, []
    for run in range(10):
        res = reconstruct(X, RECON_CONFIG, np.random.default_rng([2, run]), ctx, return_trace=True)
        contract += (res.pattern.n == X.n and bool(np.all(np.diff(res.energies) <= 0))
                     and res.final_energy <= res.initial_energy)
        K = ctx.summaries(res.pattern).K
        covered.append(float(np.mean((K >= lo) & (K <= hi))))
    good = sum(c >= 0.9 for c in covered)
    ok = contract == 10 and good >= 8
    report(10, ok, f"n={X.n}, contract held in {contract}/10 runs; K within 199-simulation band at >= 90% of lag "
                   f"cells in {good}/10 runs (min coverage {min(covered):.2f})")


@pytest.mark.skipif(not (os.environ.get("STSEP_FMD_CSV") and os.environ.get("STSEP_FMD_WINDOW")),
                    reason="outbreak data not supplied (STSEP_FMD_CSV, STSEP_FMD_WINDOW)")
def test_criterion_11_outbreak_data(report):
    from stsep.io import parse_pattern_csv

    window = read_window(os.environ["STSEP_FMD_WINDOW"])
    X = parse_pattern_csv(os.environ["STSEP_FMD_CSV"], window)
    chi = chisq_test(X, 3, 3, 3)
    res = run_permutation_test(X, PermTestConfig(n_perm=2499, grid=(50, 50, 10), epsilon=1.83, delta=3.86, seed=0))
    g = build_grid(window, 50, 50, 10)
    codes = np.zeros(g.shape)
    codes.ravel()[res.index] = res.envelope.exit_codes
    xm, ym, tm = np.median(g.xs), np.median(g.ys), np.median(g.ts)
    early, late = g.ts <= tm, g.ts > tm
    nw = codes[np.ix_(g.xs <= xm, g.ys > ym, early)]
    se = codes[np.ix_(g.xs > xm, g.ys <= ym, late)]
    regions = bool((nw == 1).any() and (se == 1).any())
    ok = chi.p_value < 1e-10 and res.p_value <= 1 / 2500 + 1e-12 and regions
    report(11, ok, f"chisq p={chi.p_value:.2e}, envelope p={res.p_value:.1e}, NW-early and SE-late exits: {regions}")
