import itertools

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from graphblow.graph import (
    DomainSubset,
    TruncationError,
    WeightedGraph,
    complete_graph,
    lattice_ball,
    path_graph,
    random_connected_graph,
)
from graphblow.spectral import (
    dirichlet_ground_state,
    ec_witness_search,
    ghost_vertex_lambda1,
    rayleigh_quotient,
)


def _path_interior(n):
    g = path_graph(n + 2)
    return g, DomainSubset.from_interior(g, range(1, n + 1))


def test_singleton_interior():
    z = lattice_ball(1, 3)
    gs = dirichlet_ground_state(z, DomainSubset.from_interior(z, ["0"]))
    assert gs.lambda1 == pytest.approx(2.0)
    assert gs.phi[z.index("0")] == pytest.approx(1.0)


def test_two_vertex_interior():
    g, om = _path_interior(2)
    gs = dirichlet_ground_state(g, om)
    assert gs.lambda1 == pytest.approx(1.0)
    np.testing.assert_allclose(gs.phi[[1, 2]], [0.5, 0.5])


@pytest.mark.parametrize("n", [1, 5, 17, 30])
def test_path_closed_form(n):
    g, om = _path_interior(n)
    assert dirichlet_ground_state(g, om).lambda1 == pytest.approx(2 * (1 - np.cos(np.pi / (n + 1))), rel=1e-10)


def test_inverse_iteration_matches_dense_solver():
    g = lattice_ball(2, 9)
    inner = [i for i in range(g.n) if g.depth(i) < 9]
    om = DomainSubset.from_interior(g, inner)
    it = dirichlet_ground_state(g, om, dense_cutoff=0)
    dense = dirichlet_ground_state(g, om, dense_cutoff=10_000)
    assert it.method == "inverse-power" and dense.method == "dense"
    assert it.lambda1 == pytest.approx(dense.lambda1, rel=1e-9)
    np.testing.assert_allclose(it.phi, dense.phi, atol=1e-8)


def test_neumann_case_on_whole_finite_graph():
    g = random_connected_graph(7, 2)
    gs = dirichlet_ground_state(g, DomainSubset.from_interior(g, range(7)))
    assert gs.lambda1 == 0.0
    assert gs.integral(g, np.ones(7)) == pytest.approx(1.0)


@given(st.integers(3, 25), st.integers(0, 10_000))
def test_ground_state_is_minimal_rayleigh_quotient(n, seed):
    g = random_connected_graph(n, seed)
    inner = list(range(n - 1))
    try:
        om = DomainSubset.from_interior(g, inner)
    except ValueError:
        return
    gs = dirichlet_ground_state(g, om)
    assert np.all(gs.phi[om.interior] > 0)
    assert gs.integral(g, np.ones(n)) == pytest.approx(1.0)
    rng = np.random.default_rng(seed)
    f = np.zeros(n)
    f[om.interior] = rng.normal(size=om.interior.size)
    assert rayleigh_quotient(g, om, f) >= gs.lambda1 - 1e-10
    assert rayleigh_quotient(g, om, gs.phi) == pytest.approx(gs.lambda1, abs=1e-10)


def test_measure_scaling():
    g = random_connected_graph(6, 11)
    scaled = WeightedGraph(g.ids, 3.0 * g.mu, g.edges, g.weights)
    om = DomainSubset.from_interior(g, range(4))
    a = dirichlet_ground_state(g, om)
    b = dirichlet_ground_state(scaled, DomainSubset.from_interior(scaled, range(4)))
    assert b.lambda1 == pytest.approx(a.lambda1 / 3.0, rel=1e-12)
    np.testing.assert_allclose(b.phi, a.phi / 3.0, rtol=1e-10)


def test_ghost_single_vertex():
    gs = ghost_vertex_lambda1(WeightedGraph(["x"], [1.0], np.empty((0, 2), dtype=np.int64), []), "x")
    assert gs.lambda1 == pytest.approx(1.0) and gs.phi[0] == pytest.approx(1.0)


def test_ghost_two_vertices():
    gs = ghost_vertex_lambda1(path_graph(2), 0)
    expect = sla.eigvalsh(np.array([[2.0, -1.0], [-1.0, 1.0]]))[0]
    assert gs.lambda1 == pytest.approx(expect, rel=1e-12)


def test_ghost_measure_scaling():
    g = random_connected_graph(5, 3)
    scaled = WeightedGraph(g.ids, 2.5 * g.mu, g.edges, g.weights)
    assert ghost_vertex_lambda1(scaled, 0).lambda1 == pytest.approx(ghost_vertex_lambda1(g, 0).lambda1 / 2.5)


def test_far_witness_on_the_line():
    z = lattice_ball(1, 40)
    om = ec_witness_search(z, "0", 0.1, 5)
    assert om is not None
    d = z.distances_from("0")
    assert d[om.all].min() > 5
    gs = dirichlet_ground_state(z, om)
    assert gs.lambda1 < 0.1
    # closed form: 9 interior vertices already give 2(1 - cos(pi/10)) < 0.1, 8 do not
    assert om.interior.size == 9
    assert 2 * (1 - np.cos(np.pi / 9)) > 0.1 > 2 * (1 - np.cos(np.pi / 10))


def test_complete_graph_has_no_small_subsets():
    k = complete_graph(5)
    best = np.inf
    for r in range(1, 5):
        for s in itertools.combinations(range(5), r):
            om = DomainSubset.from_interior(k, s)
            best = min(best, dirichlet_ground_state(k, om).lambda1)
    assert best > 0.01
    assert ec_witness_search(k, 0, 0.01, 0) is None


def test_far_singleton_qualifies():
    z = lattice_ball(1, 20)
    om = ec_witness_search(z, "0", 2.5, 3)
    assert om.interior.size == 1


def test_witness_search_needs_room():
    with pytest.raises(TruncationError):
        ec_witness_search(lattice_ball(1, 5), "0", 0.1, 5)
