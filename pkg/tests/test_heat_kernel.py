import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from graphblow.graph import WeightedGraph, lattice_ball, path_graph, random_connected_graph
from graphblow.heat_kernel import (
    HeatSemigroup,
    expm_pade,
    heat_kernel,
    kernel_audit,
    series_terms,
    smoothed_infimum,
)


@pytest.mark.parametrize("scale", [1e-3, 0.1, 1.0, 3.0, 40.0])
def test_expm_against_scipy(scale):
    rng = np.random.default_rng(7)
    A = scale * rng.normal(size=(12, 12))
    ref = sla.expm(A)
    assert np.max(np.abs(expm_pade(A) - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_single_vertex_kernel():
    g = WeightedGraph(["x"], [2.5], np.empty((0, 2), dtype=np.int64), [])
    for t in (0.0, 0.3, 10.0):
        assert heat_kernel(g, t).entries[0, 0] == pytest.approx(1 / 2.5)


@pytest.mark.parametrize("method", ["expm", "series"])
@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_two_vertex_closed_form(method, t):
    P = heat_kernel(path_graph(2), t, method).entries
    e = np.exp(-2 * t)
    np.testing.assert_allclose(P, [[(1 + e) / 2, (1 - e) / 2], [(1 - e) / 2, (1 + e) / 2]], atol=1e-14)


def test_initial_condition():
    g = random_connected_graph(6, 1)
    np.testing.assert_allclose(heat_kernel(g, 0.0).entries, np.diag(1 / g.mu))


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        heat_kernel(path_graph(2), -1.0)


def test_series_term_cap():
    with pytest.raises(ValueError):
        heat_kernel(lattice_ball(1, 3), 50.0, "series", slice_bound=None, max_terms=20)
    assert series_terms(1.0, 0.25) < 30


@given(st.integers(2, 30), st.integers(0, 10_000), st.floats(0.01, 8.0))
def test_kernel_identities(n, seed, t):
    g = random_connected_graph(n, seed)
    P = heat_kernel(g, t).entries
    assert P.min() >= 0
    np.testing.assert_allclose(P, P.T, atol=1e-12)
    np.testing.assert_allclose(P @ g.mu, 1.0, atol=1e-12)
    np.testing.assert_allclose(P, heat_kernel(g, t, "series").entries, atol=1e-11)


def test_audit_reports_small_violations():
    rep = kernel_audit(random_connected_graph(15, 3), [0.1, 1.0, 5.0])
    v = rep.violations()
    for key in ("positivity", "symmetry", "mass", "semigroup", "initial"):
        assert v[key] <= 1e-10, key
    assert v["cross_method"] <= 1e-9
    assert v["derivative"] <= 1e-7


def test_semigroup_action_matches_kernel():
    g = random_connected_graph(9, 8)
    sg = HeatSemigroup(g)
    f = np.linspace(0, 1, 9)
    np.testing.assert_allclose(sg.apply(0.7, f), heat_kernel(g, 0.7).apply(f), atol=1e-13)
    np.testing.assert_allclose(sg.kernel(0.7), heat_kernel(g, 0.7).entries, atol=1e-13)


def test_smoothed_infimum_examples():
    g = path_graph(2)
    assert smoothed_infimum(g, 0.5, np.ones(2)).sigma0 == pytest.approx(1.0)
    assert smoothed_infimum(g, 0.5, np.zeros(2)).sigma0 == 0.0
    s = smoothed_infimum(g, 1.0, np.array([1.0, 0.0]))
    assert s.sigma0 == pytest.approx((1 - np.exp(-2)) / 2)
    assert s.argmin == 1
    assert s.evaluator(1.0) == pytest.approx(s.sigma0)
    with pytest.raises(ValueError):
        smoothed_infimum(g, 0.0, np.ones(2))


def test_smoothed_infimum_respects_truncation_margin():
    z = lattice_ball(1, 30)
    s = smoothed_infimum(z, 1.0, np.ones(z.n))
    assert abs(z.depth(s.argmin)) <= 30 - 4
