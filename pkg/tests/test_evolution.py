import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphblow.bounds import lower_bound_basic
from graphblow.evolution import (
    LifespanConvergenceError,
    OrderingViolation,
    comparison_check,
    duhamel_residual,
    estimate_lifespan,
    integrate,
    monotone_iterate,
    threshold_for,
)
from graphblow.graph import GraphFamily, build_graph, cycle_graph, lattice_ball, path_graph, random_connected_graph

SINGLE = build_graph("single")


def test_scalar_blowup():
    r = integrate(SINGLE, [1.0], 2.0)
    assert r.blew_up
    assert r.lifespan_estimate == pytest.approx(1.0, abs=1e-6)
    lo, hi = r.bracket
    assert lo <= r.lifespan_estimate <= hi
    assert hi - lo <= 1e-9


def test_constant_data_on_cycle_stays_constant():
    c = cycle_graph(8)
    r = integrate(c, np.full(8, 0.7), 2.5, t_eval=[0.2, 0.5, 1.0])
    for _, u in r.samples:
        assert np.ptp(u.values) <= 1e-12
    assert r.lifespan_estimate == pytest.approx(0.7**-1.5 / 1.5, abs=1e-6)


def test_zero_data_completes():
    r = integrate(cycle_graph(5), np.zeros(5), 2.0, T_max=3.0)
    assert r.status == "completed" and r.t_end == 3.0
    assert np.all(r.final == 0)
    assert math.isinf(r.lifespan_estimate)


def test_samples_land_on_requested_times():
    r = integrate(SINGLE, [0.5], 2.0, T_max=1.0, t_eval=[0.25, 0.5, 1.0])
    np.testing.assert_allclose(r.times(), [0.0, 0.25, 0.5, 1.0])
    for t, u in r.samples:
        assert u(0) == pytest.approx(1 / (2 - t), rel=1e-9)


def test_bad_input():
    with pytest.raises(ValueError):
        integrate(SINGLE, [-1.0], 2.0)
    with pytest.raises(ValueError):
        integrate(SINGLE, [1.0], 1.0)
    with pytest.raises(ValueError):
        integrate(cycle_graph(3), [1.0, 2.0], 2.0)


def test_threshold_shrinks_tail_below_tolerance():
    for p in (1.5, 2.0, 3.0):
        U = threshold_for(2.0, p, 1e-9)
        assert U ** (1 - p) / (p - 1) <= 1e-9


def test_rerun_with_larger_threshold_stays_in_bracket():
    g = random_connected_graph(8, 5)
    psi = np.linspace(0.5, 1.5, 8)
    a = integrate(g, psi, 2.0, u_big=1e6)
    b = integrate(g, psi, 2.0, u_big=1e7)
    lo, hi = a.bracket
    assert lo - a.time_error <= b.t_stop <= hi + a.time_error


def test_dirichlet_truncations_are_ordered():
    fam = GraphFamily("lattice", 1)
    small, big = fam.truncate(6), fam.truncate(12)
    ts = np.linspace(0, 0.9, 10)
    us = integrate(small, 1.0, 2.0, T_max=0.9, t_eval=ts, boundary="dirichlet")
    ub = integrate(big, 1.0, 2.0, T_max=0.9, t_eval=ts, boundary="dirichlet")
    common = [big.index(x) for x in small.ids]
    for (_, a), (_, b) in zip(us.samples, ub.samples):
        assert np.all(a.values <= b.values[common] + 1e-10)


def test_lifespan_on_finite_cycle():
    est = estimate_lifespan(cycle_graph(6), 1.0, 2.0, 2.0, tol=1e-6)
    assert est.T_est == pytest.approx(0.5, abs=1e-6)
    assert est.bracket[0] <= est.T_est <= est.bracket[1]


def test_lifespan_on_the_line_decreases_in_radius():
    est = estimate_lifespan(GraphFamily("lattice", 1), 1.0, 1.0, 2.0)
    Ts = [h["T"] for h in est.history]
    assert all(b <= a + 1e-12 for a, b in zip(Ts, Ts[1:]))
    assert est.converged
    assert est.bracket[0] >= lower_bound_basic(1.0, 1.0, 2.0) - 1e-8


def test_lifespan_non_convergence_is_reported():
    with pytest.raises(LifespanConvergenceError) as exc:
        estimate_lifespan(GraphFamily("lattice", 1), 1.0, 1.0, 2.0, tol=1e-30, radius_schedule=[4, 8])
    assert len(exc.value.estimate.history) == 2


def test_subcritical_segment_reports_no_blowup():
    g = path_graph(9)
    psi = np.zeros(9)
    psi[4] = 1.0
    r = integrate(g, 0.05 * psi, 2.0, T_max=2.0, boundary=[0, 8])
    assert r.status == "completed"
    est = estimate_lifespan(g, 0.05 * psi, 1.0, 2.0, T_max=2.0)
    assert math.isinf(est.T_est) and est.status == "no blow-up before T_max"


def test_monotone_iteration_constant_case():
    c = cycle_graph(6)
    T = 0.5 * 1.0  # half the blow-up time of u0 = 1, p = 2
    m = monotone_iterate(c, np.ones(6), 2.0, T)
    assert m.converged
    assert all(b <= a + 1e-14 for a, b in zip(m.gaps, m.gaps[1:]))
    for t in (0.1, 0.3, 0.5):
        np.testing.assert_allclose(m.evaluate(t), 1 / (1 - t), rtol=1e-10)


def test_monotone_iteration_zero_data():
    m = monotone_iterate(cycle_graph(4), np.zeros(4), 2.0, 1.0)
    assert m.iterations == 1 and m.gaps[-1] == 0.0
    assert np.all(m.solution == 0)


def test_monotone_iteration_agrees_with_integrator():
    g = random_connected_graph(10, 12)
    psi = np.random.default_rng(3).uniform(0, 1, 10)
    T = 0.5 * lower_bound_basic(1.0, psi.max(), 2.0)
    m = monotone_iterate(g, psi, 2.0, T)
    ts = np.linspace(0, T, 7)
    r = integrate(g, psi, 2.0, T_max=T, t_eval=ts)
    assert max(np.max(np.abs(m.evaluate(t) - u.values)) for t, u in r.samples) <= 1e-5


def test_monotone_iteration_rejects_bad_bounds():
    g = cycle_graph(4)
    with pytest.raises(OrderingViolation):
        monotone_iterate(g, np.ones(4), 2.0, 0.3, upper=lambda t: np.full(4, 1.0))
    with pytest.raises(ValueError):
        monotone_iterate(g, np.ones(4), 2.0, 0.3, M=0.1)


def test_duhamel_zero_and_scalar():
    r = integrate(cycle_graph(4), np.zeros(4), 2.0, T_max=1.0, dense=True)
    assert duhamel_residual(cycle_graph(4), r, np.zeros(4)) == 0.0
    r = integrate(SINGLE, [1.0], 2.0, T_max=0.6, t_eval=np.linspace(0, 0.6, 7), dense=True)
    assert duhamel_residual(SINGLE, r, [1.0]) <= 1e-6


def test_duhamel_constant_cycle():
    c = cycle_graph(7)
    r = integrate(c, np.full(7, 0.8), 2.0, T_max=0.6, t_eval=np.linspace(0, 0.6, 5), dense=True)
    assert duhamel_residual(c, r, np.full(7, 0.8)) <= 1e-6


def test_duhamel_needs_dense_output():
    r = integrate(SINGLE, [0.2], 2.0, T_max=0.5)
    with pytest.raises(ValueError):
        duhamel_residual(SINGLE, r, [0.2])


def test_comparison_examples():
    g = random_connected_graph(6, 9)
    u0 = np.linspace(0.1, 0.6, 6)
    same = comparison_check(g, u0, u0, 2.0, 0.5)
    assert same.ordered and abs(same.max_violation) <= 1e-12
    zero = comparison_check(g, np.zeros(6), u0, 2.0, 0.5)
    assert zero.ordered


@given(st.integers(2, 30), st.integers(0, 10_000), st.floats(1.2, 3.0))
def test_comparison_property(n, seed, p):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, seed)
    u0 = rng.uniform(0, 1, n)
    v0 = u0 + rng.uniform(0, 0.5, n)
    T = 0.5 * lower_bound_basic(1.0, v0.max(), p)
    assert comparison_check(g, u0, v0, p, T).ordered


@given(st.integers(2, 20), st.integers(0, 10_000))
def test_positivity_preserved(n, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, seed)
    u0 = rng.uniform(0, 1, n) * (rng.uniform(size=n) < 0.5)
    r = integrate(g, u0, 2.0, T_max=0.5, t_eval=np.linspace(0, 0.5, 6))
    assert all(u.values.min() >= -1e-12 for _, u in r.samples)
