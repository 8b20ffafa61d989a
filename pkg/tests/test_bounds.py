import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphblow.bounds import (
    asymptotic_sweep,
    compute_bounds,
    density_bound,
    density_profile,
    finite_graph_threshold,
    heat_kernel_upper_bound,
    kaplan_bound,
    kaplan_bound_auto,
    kaplan_upper,
    lower_bound_basic,
    sandwich_finite,
)
from graphblow.evolution import estimate_lifespan
from graphblow.graph import (
    DomainSubset,
    GraphFamily,
    TruncationError,
    build_graph,
    cycle_graph,
    lattice_ball,
    path_graph,
    random_connected_graph,
)
from graphblow.spectral import ghost_vertex_lambda1


def test_lower_bound_arithmetic():
    assert lower_bound_basic(2, 1, 2) == 0.5
    assert lower_bound_basic(1, 1, 2) == 1.0
    assert lower_bound_basic(1, 3, 3) == pytest.approx(1 / 18)
    with pytest.raises(ValueError):
        lower_bound_basic(1, 1, 1)


def test_kaplan_singleton_closed_form():
    z = lattice_ball(1, 5)
    om = DomainSubset.from_interior(z, ["0"])
    res = kaplan_bound(z, om, 4.0, np.ones(z.n), 2.0)
    assert res.threshold_met and res.lambda1 == pytest.approx(2.0)
    assert res.T_up == pytest.approx(-0.5 * math.log(0.5))


def test_kaplan_threshold_boundary():
    assert kaplan_upper(2.0, 2.0, 2.0) is None
    z = lattice_ball(1, 5)
    res = kaplan_bound(z, DomainSubset.from_interior(z, ["0"]), 2.0, np.ones(z.n), 2.0)
    assert not res.threshold_met and res.T_up is None


def test_kaplan_large_scale_limit():
    g = path_graph(3)
    om = DomainSubset.from_interior(g, [1])
    psi = np.array([0.0, 0.8, 0.0])
    for lam in (1e3, 1e5):
        T = kaplan_bound(g, om, lam, psi, 2.0).T_up
        assert lam * T == pytest.approx(1 / 0.8, rel=10 / lam)


def test_kaplan_rejects_vanishing_psi():
    g = path_graph(3)
    with pytest.raises(ValueError):
        kaplan_bound(g, DomainSubset.from_interior(g, [1]), 1.0, np.array([1.0, 0.0, 1.0]), 2.0)


def test_kaplan_monotone_in_scale():
    g = random_connected_graph(8, 2)
    psi = np.linspace(0.2, 1.0, 8)
    vals = [kaplan_bound_auto(g, lam, psi, 2.0).T_up for lam in (3.0, 5.0, 10.0, 30.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_auto_prefers_singleton_for_indicator():
    z = lattice_ball(1, 10)
    psi = np.zeros(z.n)
    psi[z.index("0")] = 1.0
    res = kaplan_bound_auto(z, 50.0, psi, 2.0)
    assert res.interior == ["0"]


def test_auto_none_for_tiny_scale():
    z = lattice_ball(1, 10)
    psi = np.zeros(z.n)
    psi[z.index("0")] = 1.0
    assert kaplan_bound_auto(z, 1e-3, psi, 2.0) is None


def test_auto_at_most_the_singleton():
    g = cycle_graph(6)
    psi = np.ones(6)
    single = kaplan_bound(g, DomainSubset.from_interior(g, [0]), 5.0, psi, 2.0).T_up
    assert kaplan_bound_auto(g, 5.0, psi, 2.0).T_up <= single


def test_heat_kernel_bound_constant_data():
    res = heat_kernel_upper_bound(path_graph(2), 0, 1.0, np.ones(2), 2.0, 5.0)
    assert res.T_up == pytest.approx(1.0, rel=1e-8)
    for lam, p in ((3.0, 2.5), (0.5, 1.5)):
        res = heat_kernel_upper_bound(cycle_graph(5), 0, lam, np.ones(5), p, 50.0)
        assert res.T_up == pytest.approx(lower_bound_basic(lam, 1.0, p), rel=1e-8)


def test_heat_kernel_bound_far_bump():
    z = lattice_ball(1, 40)
    psi = np.zeros(z.n)
    psi[z.index("20")] = 1.0
    assert heat_kernel_upper_bound(z, "0", 1.0, psi, 2.0, 0.5).T_up is None


def test_heat_kernel_bound_truncation_margin():
    with pytest.raises(TruncationError):
        heat_kernel_upper_bound(GraphFamily("lattice", 1), "0", 1.0, lambda g: np.ones(g.n), 2.0, 50.0, radius=5)


def test_density_full_and_empty():
    fam = GraphFamily("lattice", 1)
    prof = density_profile(fam, lambda g: np.full(g.n, 2.0), 1.5, [1, 2, 4])
    assert prof.D_bar_estimate == 1.0
    assert density_bound(prof, 2.0) == pytest.approx(1 / 1.5)
    prof = density_profile(fam, lambda g: np.full(g.n, 0.5), 1.0, [1, 2, 4])
    assert prof.D_bar_estimate == 0.0 and density_bound(prof, 2.0) is None
    with pytest.raises(ValueError):
        density_profile(fam, lambda g: np.ones(g.n), 0.0, [1])


def test_density_half_line():
    fam = GraphFamily("lattice", 1)
    half = lambda g: (np.asarray(g.coords)[:, 0] >= 0).astype(float)
    prof = density_profile(fam, half, 1.0, [1, 2, 4, 8])
    assert all(d == 1.0 for _, d in prof.per_radius)
    assert density_bound(prof, 2.0) == 1.0


def test_density_nonincreasing_in_beta():
    fam = GraphFamily("lattice", 2)
    rule = lambda g: np.cos(np.asarray(g.coords)[:, 0]) ** 2 + 0.1 * np.asarray(g.coords)[:, 1] % 1
    a = density_profile(fam, rule, 0.3, [1, 2, 3])
    b = density_profile(fam, rule, 0.7, [1, 2, 3])
    for (_, da), (_, db) in zip(a.per_radius, b.per_radius):
        assert 0 <= db <= da <= 1


def test_finite_threshold_examples():
    single = build_graph("single")
    t = finite_graph_threshold(single, 0, np.ones(1), 2.0)
    assert t.lambda1 == pytest.approx(1.0) and t.Lambda1 == pytest.approx(1.0)
    g = path_graph(2)
    a = finite_graph_threshold(g, 0, np.ones(2), 2.0)
    gs = ghost_vertex_lambda1(g, 0)
    assert a.Lambda1 == pytest.approx(gs.lambda1 / np.dot(gs.phi, g.mu))
    assert finite_graph_threshold(g, 0, 4 * np.ones(2), 2.0).Lambda1 == pytest.approx(a.Lambda1 / 4)
    with pytest.raises(ValueError):
        finite_graph_threshold(g, 0, np.zeros(2), 2.0)


def test_sandwich_examples():
    s = sandwich_finite(np.array([1.0, 2.0, 1.5]), 2.0)
    assert (s.t1(1.0), s.t2(1.0)) == (0.5, 1.0)
    s = sandwich_finite(np.full(4, 0.8), 3.0)
    assert s.t1(2.0) == s.t2(2.0) == pytest.approx(lower_bound_basic(2.0, 0.8, 3.0))
    with pytest.raises(ValueError):
        sandwich_finite(np.array([0.0, 1.0]), 2.0)


@given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=20), st.floats(1.1, 4.0), st.floats(0.01, 100))
def test_sandwich_ordering(vals, p, lam):
    s = sandwich_finite(np.array(vals), p)
    assert s.t1(lam) <= s.t2(lam)
    assert (s.t1(lam) == s.t2(lam)) == (max(vals) == min(vals))


def test_sandwich_holds_on_random_graph():
    g = random_connected_graph(9, 21)
    psi = np.random.default_rng(21).uniform(0.5, 1.5, 9)
    s = sandwich_finite(psi, 2.0)
    est = estimate_lifespan(g, psi, 1.0, 2.0, T_max=10)
    assert s.t1(1.0) - 1e-8 <= est.T_est <= s.t2(1.0) + 1e-8


def test_report_is_consistent():
    g = random_connected_graph(10, 4)
    psi = np.random.default_rng(4).uniform(0.5, 1.5, 10)
    rep = compute_bounds(g, psi, 2.0, 2.0)
    assert rep.consistent()
    T = estimate_lifespan(g, psi, 2.0, 2.0).T_est
    assert rep.lower_basic <= T
    assert all(v >= T - 1e-8 for v in rep.upper_bounds().values())


def test_sweep_large_scale_trend():
    c = cycle_graph(8)
    psi = np.full(8, 0.5)
    psi[0] = 1.0
    tab = asymptotic_sweep(c, psi, 2.0, [10, 30, 100])
    vals = [r["scaled_lifespan"] for r in tab.rows]
    assert tab.monotone and all(v >= 1 for v in vals)
    assert tab.limit == 1.0


def test_sweep_constant_data_is_exact():
    c = cycle_graph(5)
    tab = asymptotic_sweep(c, np.full(5, 0.5), 2.0, [0.5, 1.0, 4.0])
    for r in tab.rows:
        assert r["scaled_lifespan"] == pytest.approx(2.0, abs=1e-6)


def test_sweep_small_scale_inside_sandwich():
    g = random_connected_graph(7, 6)
    psi = np.random.default_rng(6).uniform(0.5, 1.5, 7)
    tab = asymptotic_sweep(g, psi, 2.0, [0.03, 0.1], direction="small")
    for r in tab.rows:
        assert r["t1_scaled"] - 1e-7 <= r["scaled_lifespan"] <= r["t2_scaled"] + 1e-7


def test_sweep_budget_marks_partial_table():
    tab = asymptotic_sweep(cycle_graph(5), np.ones(5), 2.0, [1.0, 2.0, 3.0], budget_s=0.0)
    assert not tab.complete and tab.rows == []
