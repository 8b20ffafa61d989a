import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from graphblow.graph import DomainSubset, TruncationError, lattice_ball, path_graph, random_connected_graph
from graphblow.operators import (
    DomainError,
    VertexFunction,
    cde_check,
    dirichlet_laplacian_apply,
    dirichlet_matrix,
    gamma,
    gamma2,
    laplacian_apply,
)


def _symbolic_forms(n):
    """Delta, Gamma, Gamma_2 and the CDE' sides at the middle of a unit path with ``n`` vertices."""
    f = sp.symbols(f"f0:{n}", positive=True)

    def nbrs(i):
        return [j for j in (i - 1, i + 1) if 0 <= j < n]

    def lap(h, i):
        return sum(h[j] - h[i] for j in nbrs(i))

    def gam(a, b, i):
        return sp.Rational(1, 2) * sum((a[j] - a[i]) * (b[j] - b[i]) for j in nbrs(i))

    c = n // 2
    idx = range(c - 2, c + 3)
    L = {i: lap(f, i) for i in range(c - 1, c + 2)}
    G = {i: gam(f, f, i) for i in range(c - 1, c + 2)}
    Lvec = {i: L.get(i, 0) for i in range(n)}
    Gvec = {i: G.get(i, 0) for i in range(n)}
    g2 = sp.Rational(1, 2) * (lap(Gvec, c) - 2 * gam(f, Lvec, c))
    ratio = {i: G[i] / f[i] for i in G}
    lhs = g2 - gam(f, ratio, c)
    logf = [sp.log(x) for x in f]
    dlog = lap(logf, c)
    return f, c, idx, L[c], G[c], g2, lhs, dlog


def test_second_difference_on_short_path():
    g = path_graph(3)
    lf = laplacian_apply(g, [0.0, 1.0, 0.0])
    assert lf(1) == -2.0 and lf(0) == 1.0


def test_quadratic_on_the_line():
    z = lattice_ball(1, 6)
    x = np.array([float(i) for i in z.ids])
    lf = laplacian_apply(z, x**2, at=[str(k) for k in range(-5, 6)])
    np.testing.assert_allclose(lf.values[lf.domain], 2.0)


@given(st.integers(2, 20), st.integers(0, 999), st.floats(-5, 5))
def test_constants_are_harmonic(n, seed, c):
    g = random_connected_graph(n, seed)
    np.testing.assert_allclose(laplacian_apply(g, np.full(n, c)).values, 0.0, atol=1e-12)
    np.testing.assert_allclose(gamma(g, np.full(n, c)).values, 0.0, atol=1e-12)


def test_missing_neighbour_value_is_named():
    g = path_graph(3)
    f = VertexFunction.on(g, [0, 1], [1.0, 2.0])
    with pytest.raises(DomainError, match="2"):
        laplacian_apply(g, f, at=[1])


def test_dirichlet_laplacian_examples():
    g = path_graph(3)
    om = DomainSubset.from_interior(g, [1])
    np.testing.assert_allclose(dirichlet_laplacian_apply(g, om, [1.0]), [-2.0])
    np.testing.assert_allclose(dirichlet_laplacian_apply(g, om, [0.0]), [0.0])
    g4 = path_graph(4)
    om = DomainSubset.from_interior(g4, [1, 2])
    M = dirichlet_matrix(g4, om)
    np.testing.assert_allclose(M - np.diag(np.diag(M)), [[0, 1], [1, 0]])
    np.testing.assert_allclose(dirichlet_laplacian_apply(g4, om, [1.0, 1.0]), [-1.0, -1.0])
    with pytest.raises(ValueError):
        dirichlet_laplacian_apply(g4, DomainSubset(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)), [])


def test_dirichlet_matrix_is_the_operator():
    g4 = path_graph(4)
    om = DomainSubset.from_interior(g4, [1, 2])
    np.testing.assert_allclose(dirichlet_matrix(g4, om), [[-2, 1], [1, -2]])


def test_carre_du_champ_small_path():
    g = path_graph(3)
    assert gamma(g, [0.0, 1.0, 0.0])(1) == 1.0


def test_gamma2_matches_symbolic_expansion():
    f, c, idx, _, _, g2, _, _ = _symbolic_forms(5)
    vals = [0.3, 0.0, 1.0, 0.0, 0.7]
    expect = float(g2.subs(dict(zip(f, vals))))
    got = gamma2(path_graph(5), vals, at=[2])(2)
    assert got == pytest.approx(expect, abs=1e-13)


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_gamma2_symbolic_property(vals):
    f, c, *_ , g2, _, _ = _symbolic_forms(5)
    expect = float(g2.subs(dict(zip(f, vals))))
    assert gamma2(path_graph(5), vals, at=[2])(2) == pytest.approx(expect, rel=1e-10, abs=1e-10)


def test_constant_function_cde_is_vacuous_or_tight():
    z = lattice_ball(1, 4)
    res = cde_check(z, "0", 2.0, 0.0, "CDE'", f=np.full(z.n, 3.0))
    assert res.satisfied and res.lhs == pytest.approx(0, abs=1e-12)
    assert res.rhs == pytest.approx(0, abs=1e-12)
    res = cde_check(z, "0", 2.0, -1.0, "CDE", f=np.full(z.n, 3.0))
    assert res.satisfied


def test_cde_prime_against_symbolic_oracle():
    z = lattice_ball(1, 4)
    order = ["-2", "-1", "0", "1", "2"]
    vals = dict(zip(order, [4.0, 2.0, 1.0, 2.0, 4.0]))
    arr = np.ones(z.n)
    for k, v in vals.items():
        arr[z.index(k)] = v
    res = cde_check(z, "0", 2.0, 0.0, "CDE'", f=arr)
    f, c, idx, _, _, _, lhs, dlog = _symbolic_forms(5)
    subs = dict(zip(f, [4, 2, 1, 2, 4]))
    exp_lhs = float(lhs.subs(subs))
    exp_rhs = float(((subs[f[c]] * dlog.subs(subs)) ** 2 / 2).evalf())
    assert res.lhs == pytest.approx(exp_lhs, rel=1e-12)
    assert res.rhs == pytest.approx(exp_rhs, rel=1e-12)
    assert res.margin == pytest.approx(exp_lhs - exp_rhs, rel=1e-12)


def test_falsify_small_dimension():
    z = lattice_ball(1, 4)
    res = cde_check(z, "0", 0.01, 0.0, "CDE'", "falsify", budget=10_000, seed=1)
    assert not res.satisfied and res.margin < 0
    # re-evaluate the witness symbolically
    f, c, idx, _, _, _, lhs, dlog = _symbolic_forms(5)
    w = res.witness_f
    vals = [w.values[z.index(k)] for k in ["-2", "-1", "0", "1", "2"]]
    subs = dict(zip(f, [sp.Float(v, 30) for v in vals]))
    margin = lhs.subs(subs) - (subs[f[c]] * dlog.subs(subs)) ** 2 / sp.Float(0.01, 30)
    assert float(margin) < 0


def test_verify_rejects_nonpositive_f():
    z = lattice_ball(1, 4)
    with pytest.raises(ValueError):
        cde_check(z, "0", 2.0, 0.0, "CDE'", f=np.zeros(z.n))


def test_too_close_to_the_cut():
    z = lattice_ball(1, 4)
    with pytest.raises(TruncationError):
        cde_check(z, "3", 2.0, 0.0, "CDE'", f=np.ones(z.n))
