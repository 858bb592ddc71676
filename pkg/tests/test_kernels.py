import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from stsep.geometry import PointPattern, Window, build_grid
from stsep.kernels import (
    Bandwidths,
    conditional_intensity,
    cv_curve,
    edge_correction_space,
    edge_correction_time,
    estimate_intensity,
    estimate_rho_space,
    estimate_rho_time,
    gaussian_kernel,
    rho_st_at,
    rule_of_thumb,
    select_bandwidth,
)
from stsep.sim import burst_model, simulate_burst


def test_kernel_values():
    assert gaussian_kernel(0.0, 1.0, 1) == pytest.approx(0.3989423, abs=1e-7)
    assert gaussian_kernel(np.zeros(2), 1.0, 2) == pytest.approx(0.1591549, abs=1e-7)
    assert gaussian_kernel(0.0, 2.0, 1) == pytest.approx(0.1994711, abs=1e-7)
    mass, _ = integrate.quad(lambda v: gaussian_kernel(v, 2.0, 1), -16, 16, points=[0])
    assert mass == pytest.approx(1.0, abs=1e-9)


def test_kernel_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        gaussian_kernel(0.0, 0.0)
    with pytest.raises(ValueError):
        gaussian_kernel(0.0, -1.0, 2)


@pytest.mark.parametrize("b", [0.05, 0.3, 1.7])
def test_kernel_normalisation_2d(b):
    h = 16 * b / 801
    g = (np.arange(801) - 400) * h
    X, Y = np.meshgrid(g, g, indexing="ij")
    m = gaussian_kernel(np.stack([X, Y], -1), b, 2).sum() * h * h
    assert m == pytest.approx(1.0, abs=1e-10)


def test_edge_correction_interior_and_edges(unit):
    assert edge_correction_space((0.5, 0.5), unit, 0.01) == pytest.approx(1.0, abs=1e-6)
    big = Window.rectangle(0, 100, 0, 100)
    assert edge_correction_space((50, 0), big, 0.5, (400, 400)) == pytest.approx(0.5, abs=1e-3)
    # corner: product of two half-line masses, checked against a fine quadrature
    c = edge_correction_space((0.0, 0.0), unit, 0.05)
    fine = edge_correction_space((0.0, 0.0), unit, 0.05, (2000, 2000))
    assert c == pytest.approx(0.25, abs=1e-3)
    assert c == pytest.approx(fine, abs=1e-3)


def test_edge_correction_polygon_matches_rectangle():
    sq = Window.polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    u = np.array([[0.1, 0.2], [0.5, 0.5], [0.95, 0.01]])
    np.testing.assert_allclose(edge_correction_space(u, sq, 0.07), edge_correction_space(u, Window.unit_cube(), 0.07), atol=1e-12)


def test_quadrature_guard(unit):
    with pytest.raises(ValueError, match="insufficient quadrature grid"):
        edge_correction_space((0.5, 0.5), unit, 0.1, (9, 50))
    with pytest.raises(ValueError, match="insufficient quadrature grid"):
        edge_correction_time(0.5, unit, 0.1, 5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.005, 0.5))
def test_edge_correction_bounds(x, y, eps):
    c = edge_correction_space((x, y), Window.unit_cube(), eps)
    assert 0 < c <= 1 + 1e-9


def test_single_point_space_mass(unit):
    g = build_grid(unit, 50, 50, 1)
    p = PointPattern([[0.5, 0.5, 0.5]], unit)
    rho = estimate_rho_space(p, 0.05, g)
    assert rho.sum() * g.cell_area == pytest.approx(1.0, rel=0.02)
    assert np.unravel_index(rho.argmax(), rho.shape) in {(24, 24), (24, 25), (25, 24), (25, 25)}


def test_identical_locations_linear(unit):
    g = build_grid(unit, 20, 20, 1)
    one = PointPattern([[0.3, 0.6, 0.5]], unit)
    many = PointPattern([[0.3, 0.6, 0.1 * k] for k in range(1, 6)], unit)
    np.testing.assert_allclose(estimate_rho_space(many, 0.1, g), 5 * estimate_rho_space(one, 0.1, g), rtol=1e-12)


def test_uniform_space_mean(unit):
    rng = np.random.default_rng(4)
    p = PointPattern(rng.random((100, 3)), unit)
    g = build_grid(unit, 25, 25, 1)
    rho = estimate_rho_space(p, 0.1, g)
    assert rho.mean() == pytest.approx(100, rel=0.02)


def test_time_estimates(unit):
    g = build_grid(unit, 1, 1, 200)
    p = PointPattern([[0.5, 0.5, 0.5]], unit)
    assert estimate_rho_time(p, 0.01, g).sum() * g.cell_length == pytest.approx(1.0, rel=0.01)
    assert edge_correction_time(0.0, unit, 0.05) == pytest.approx(0.5, abs=0.01)
    edge = PointPattern([[0.5, 0.5, 0.0]], unit)
    rho = estimate_rho_time(edge, 0.05, g)
    assert rho[0] == pytest.approx(2 * gaussian_kernel(0.0, 0.05), rel=0.02)


def test_single_interior_point_st_mass(unit):
    p = PointPattern([[0.4, 0.6, 0.5]], unit)
    fld = estimate_intensity(p, Bandwidths(0.08, 0.08), build_grid(unit, 25, 25, 20))
    for v in fld.mass().values():
        assert v == pytest.approx(1.0, rel=0.02)
    np.testing.assert_allclose(fld.rho_sep, fld.rho_space[:, :, None] * fld.rho_time[None, None, :])


def test_constant_intensity_flat(unit):
    rng = np.random.default_rng(5)
    n = 20000
    p = PointPattern(rng.random((n, 3)), unit)
    fld = estimate_intensity(p, Bandwidths(0.1, 0.1), build_grid(unit, 10, 10, 10))
    # kernel-smoothed Poisson field: relative sd about 1/sqrt(n * 4 pi eps^2 * 2 sqrt(pi) delta)
    se = n / np.sqrt(n * 4 * np.pi * 0.01 * 2 * np.sqrt(np.pi) * 0.1)
    # point-based edge correction keeps the mass but not the level next to the boundary
    inner = fld.rho_st[3:7, 3:7, 3:7]
    assert np.abs(inner - n).max() < 4 * se
    assert abs(inner.mean() - n) < 3 * se


def test_st_not_separable_for_burst():
    rng = np.random.default_rng(0)
    p = simulate_burst(burst_model("i", 200.0), rng)
    fld = estimate_intensity(p, Bandwidths(0.05, 0.05), build_grid(p.window, 25, 25, 20))
    assert np.abs(fld.rho_st - fld.rho_sep).max() > 0.1 * fld.rho_sep.max()


def test_sep_rank_one(uniform_pattern):
    fld = estimate_intensity(uniform_pattern, Bandwidths(0.1, 0.1), build_grid(uniform_pattern.window, 15, 15, 10))
    a, b = fld.rho_sep[:, :, 2], fld.rho_sep[:, :, 7]
    ratio = b / a
    np.testing.assert_allclose(ratio, ratio.flat[0], rtol=1e-10)
    mass = fld.mass()
    assert mass["rho_sep"] == pytest.approx(mass["rho_space"] * mass["rho_time"] / fld.n, rel=1e-10)


def test_conditional_intensity_separable_and_constant(uniform_pattern):
    g = build_grid(uniform_pattern.window, 10, 10, 8)
    fld = estimate_intensity(uniform_pattern, Bandwidths(0.1, 0.1), g)
    from dataclasses import replace

    sep = replace(fld, rho_st=fld.rho_sep)
    c = conditional_intensity(sep, "space-given-time")
    for k in range(1, g.nt):
        np.testing.assert_allclose(c[:, :, k], c[:, :, 0], rtol=1e-10)
    const = replace(fld, rho_st=np.full(g.shape, 3.0), rho_time=np.full(g.nt, 3.0 * g.window.area))
    np.testing.assert_allclose(conditional_intensity(const).compressed(), 1 / g.window.area)


def test_conditional_intensity_burst_varies():
    p = simulate_burst(burst_model("iii", 100.0), np.random.default_rng(2))
    g = build_grid(p.window, 20, 20, 10)
    c = conditional_intensity(estimate_intensity(p, Bandwidths(0.06, 0.06), g))
    slices = c.filled(0).reshape(-1, g.nt) * g.cell_area
    l1 = np.abs(slices[:, :, None] - slices[:, None, :]).sum(axis=0)
    assert l1.max() > 0.2


def test_conditional_intensity_zero_denominator(unit):
    p = PointPattern([[0.5, 0.5, 0.05]], unit)
    fld = estimate_intensity(p, Bandwidths(0.1, 0.01), build_grid(unit, 5, 5, 10))
    c = conditional_intensity(fld, "space-given-time")
    assert c.mask[:, :, -1].all()


def test_rule_of_thumb_examples():
    rng = np.random.default_rng(8)
    z = rng.standard_normal(1000)
    expected = 0.9 * min(np.std(z, ddof=1), stats.iqr(z) / 1.34) * 1000 ** -0.2
    assert rule_of_thumb(z) == pytest.approx(expected, rel=1e-12)
    assert rule_of_thumb(z) == pytest.approx(0.2259, abs=0.01)
    u = rng.random(600)
    assert rule_of_thumb(u) == pytest.approx(0.9 * min(1 / np.sqrt(12), 0.5 / 1.34) * 600 ** -0.2, rel=0.05)
    # closed form 0.0723; the quoted 0.0719 is a rounding of the same formula
    assert 0.9 * min(1 / np.sqrt(12), 0.5 / 1.34) * 600 ** -0.2 == pytest.approx(0.0719, abs=5e-4)


def test_cv_prefers_smaller_bandwidth_for_clusters():
    rng = np.random.default_rng(3)
    t = np.concatenate([rng.normal(0.25, 0.02, 100), rng.normal(0.75, 0.02, 100)])
    pts = np.column_stack([rng.random(200), rng.random(200), np.clip(t, 0, 1)])
    p = PointPattern(pts, Window.unit_cube())
    grid, ll = cv_curve(p, "time")
    assert len(grid) == 20 and grid[0] == pytest.approx(np.ptp(p.t) / 200)
    assert select_bandwidth(p, "time", "likelihood-CV") == grid[np.argmax(ll)]
    assert select_bandwidth(p, "time", "likelihood-CV") < select_bandwidth(p, "time")


def test_select_bandwidth_errors(unit):
    p = PointPattern([[0.1 * k, 0.5, 0.5 + 0.01 * k] for k in range(1, 10)], unit)
    with pytest.raises(ValueError):
        select_bandwidth(p, "time")
    same = PointPattern([[0.05 * k, 0.5, 0.5] for k in range(1, 15)], unit)
    with pytest.raises(ValueError, match="degenerate"):
        select_bandwidth(same, "time")


def test_empty_pattern(unit):
    with pytest.raises(ValueError, match="empty pattern"):
        estimate_rho_space(PointPattern(np.zeros((0, 3)), unit), 0.1, build_grid(unit, 10, 10, 1))


def test_translation_equivariance(uniform_pattern):
    bw = Bandwidths(0.08, 0.1)
    a = estimate_intensity(uniform_pattern, bw, build_grid(uniform_pattern.window, 12, 12, 6))
    w2 = uniform_pattern.window.translated(3.0, -2.0, 5.0)
    moved = PointPattern(uniform_pattern.points + [3.0, -2.0, 5.0], w2)
    b = estimate_intensity(moved, bw, build_grid(w2, 12, 12, 6))
    np.testing.assert_allclose(a.rho_st, b.rho_st, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(a.rho_sep, b.rho_sep, rtol=1e-9, atol=1e-9)


def test_rho_at_points_matches_grid(unit):
    p = PointPattern([[0.5, 0.5, 0.5]], unit)
    bw = Bandwidths(0.1, 0.1)
    v = rho_st_at(p, bw, at=[[0.5, 0.5, 0.5]])
    c = edge_correction_space((0.5, 0.5), unit, 0.1) * edge_correction_time(0.5, unit, 0.1)
    assert v[0] == pytest.approx(gaussian_kernel(np.zeros(2), 0.1, 2) * gaussian_kernel(0.0, 0.1) / c)
