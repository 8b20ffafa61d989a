"""Principal Dirichlet eigenpair, far-away small-eigenvalue witnesses, ghost-vertex problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import DomainSubset, TruncationError, VertexRef, WeightedGraph


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


class PositivityError(RuntimeError):
    """The computed ground state is not positive: a solver bug, not a property of the graph."""


DENSE_CUTOFF = 64


@dataclass(frozen=True)
class GroundState:
    """Smallest eigenpair of ``-Delta_Omega`` with ``sum phi mu = 1``.

    ``phi`` is indexed like the host graph and vanishes off the interior.
    """

    lambda1: float
    phi: np.ndarray
    residual: float
    domain: DomainSubset
    method: str
    iterations: int = 0

    def integral(self, g: WeightedGraph, f) -> float:
        """``sum_Omega f phi mu``."""
        return float(np.dot(np.asarray(f, dtype=float) * g.mu, self.phi))

    def to_dict(self, g: WeightedGraph) -> dict:
        inner = self.domain.interior
        return {
            "lambda1": self.lambda1,
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
            "interior": [g.ids[i] for i in inner],
            "boundary": [g.ids[i] for i in self.domain.boundary],
            "phi": {g.ids[i]: float(self.phi[i]) for i in inner},
        }


def _stiffness(g: WeightedGraph, inner: np.ndarray, extra_diag=None) -> sp.csr_matrix:
    """``mu * (-Delta_Omega)`` restricted to ``inner``: symmetric, weights on the diagonal."""
    W = g.weight_matrix()[inner][:, inner]
    diag = g.m[inner].astype(float)
    if extra_diag is not None:
        diag = diag + extra_diag
    return sp.csr_matrix(sp.diags(diag) - W)


def _solve_pencil(L: sp.csr_matrix, mu: np.ndarray, tol: float, max_iter: int, dense_cutoff: int):
    """Smallest eigenpair of ``L v = lam diag(mu) v`` with ``L`` SPD (or PSD with null constants)."""
    k = mu.size
    if k <= dense_cutoff:
        vals, vecs = sla.eigh(L.toarray(), np.diag(mu), subset_by_index=[0, 0])
        return float(vals[0]), vecs[:, 0], "dense", 0
    lu = spla.splu(sp.csc_matrix(L))
    v = np.ones(k)
    lam_prev, lam = np.inf, np.nan
    res = np.inf
    for it in range(1, max_iter + 1):
        v = lu.solve(mu * v)
        v /= np.sqrt(np.dot(v * mu, v))
        Lv = L @ v
        lam = float(np.dot(v, Lv))
        res = float(np.max(np.abs(Lv / mu - lam * v)) / max(np.max(np.abs(v)), 1e-300))
        if res <= tol and abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return lam, v, "inverse-power", it
        lam_prev = lam
    raise ConvergenceError("inverse power iteration did not converge", res)


def _finish(g, om, lam, v, method, it, extra_diag=None) -> GroundState:
    inner = om.interior
    mu = g.mu[inner]
    v = v / np.dot(v, mu)  # sum phi mu = 1, also fixes the sign
    if not np.all(v > 0):
        raise PositivityError(f"ground state has nonpositive entries (min {v.min():.3e})")
    phi = np.zeros(g.n)
    phi[inner] = v
    L = _stiffness(g, inner, extra_diag)
    res = float(np.max(np.abs(L @ v / mu - lam * v)))
    return GroundState(float(lam), phi, res, om, method, it)


def dirichlet_ground_state(
    g: WeightedGraph,
    om: DomainSubset,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    dense_cutoff: int = DENSE_CUTOFF,
) -> GroundState:
    """Smallest eigenvalue of ``-Delta_Omega phi = lambda phi`` and its positive eigenfunction.

    Inverse power iteration on the symmetric pencil ``(mu * -Delta_Omega, mu)``
    (shift 0); a dense symmetric solver is used for interiors of at most
    ``dense_cutoff`` vertices.  An interior with no outside neighbours (the
    whole of a finite graph) gives the Neumann value ``lambda1 = 0`` with
    constant ``phi``.
    """
    inner = om.interior
    if inner.size == 0:
        raise ValueError("empty interior")
    if om.boundary.size == 0:
        phi = np.zeros(g.n)
        phi[inner] = 1.0 / g.mu[inner].sum()
        return GroundState(0.0, phi, 0.0, om, "neumann", 0)
    L = _stiffness(g, inner)
    lam, v, method, it = _solve_pencil(L, g.mu[inner], tol, max_iter, dense_cutoff)
    return _finish(g, om, lam, v, method, it)


def rayleigh_quotient(g: WeightedGraph, om: DomainSubset, f: np.ndarray) -> float:
    """``<-Delta_Omega f, f>_mu / <f, f>_mu`` for ``f`` indexed like the host graph."""
    inner = om.interior
    v = np.asarray(f, dtype=float)[inner]
    L = _stiffness(g, inner)
    return float(np.dot(v, L @ v) / np.dot(v * g.mu[inner], v))


def ghost_vertex_lambda1(
    g: WeightedGraph, x_tilde: VertexRef, ghost_weight: float = 1.0, **kw
) -> GroundState:
    """Ground state on all of ``V`` after attaching a Dirichlet ghost vertex to ``x_tilde``.

    The ghost ``z`` carries ``u(z) = 0`` and is joined by an edge of weight
    ``ghost_weight`` (1 by default), so only the diagonal entry at
    ``x_tilde`` changes.
    """
    xt = g.index(x_tilde)
    inner = np.arange(g.n)
    extra = np.zeros(g.n)
    extra[xt] = ghost_weight
    L = _stiffness(g, inner, extra)
    lam, v, method, it = _solve_pencil(
        L, g.mu, kw.get("tol", 1e-10), kw.get("max_iter", 10_000), kw.get("dense_cutoff", DENSE_CUTOFF)
    )
    om = DomainSubset(inner, np.empty(0, dtype=np.int64))
    return _finish(g, om, lam, v, method + "+ghost", it, extra)


def _usable(g: WeightedGraph) -> np.ndarray:
    """Vertices whose full neighbourhood is present (strictly inside any truncation)."""
    if not g.is_truncation:
        return np.ones(g.n, dtype=bool)
    return g.distances_from(g.center) < g.truncation_radius


def ec_witness_search(
    g: WeightedGraph,
    x_tilde: VertexRef,
    eps: float,
    delta: float,
    size_cap: int = 200,
) -> DomainSubset | None:
    """Find a connected ``Omega`` with ``lambda1(Omega) < eps`` entirely farther than ``delta``.

    Candidates are geodesic path segments running away from ``x_tilde``, of
    increasing length, then balls of increasing radius around the nearest
    admissible vertex.  Returns None when ``size_cap`` interior vertices do
    not suffice.  One ``(eps, delta)`` pair is certified per call.
    """
    if eps <= 0 or delta < 0:
        raise ValueError("need eps > 0 and delta >= 0")
    xt = g.index(x_tilde)
    d = g.distances_from(xt)
    usable = _usable(g)
    # interior vertices must be at distance > delta + 1 so the closure stays beyond delta
    admissible = usable & (d > delta + 1)
    if not admissible.any():
        if g.is_truncation and d.max() > delta + 1:
            raise TruncationError("no admissible vertex strictly inside the truncation")
        if g.is_truncation:
            raise TruncationError("truncation too small for the requested delta")
        return None

    dmin = d[admissible].min()
    start = int(np.flatnonzero(admissible & (d == dmin))[0])

    def qualifies(inner):
        om = DomainSubset.from_interior(g, inner)
        if om.boundary.size and d[om.all].min() <= delta:
            return None
        gs = dirichlet_ground_state(g, om)
        return om if gs.lambda1 < eps else None

    path = [start]
    while len(path) <= size_cap:
        hit = qualifies(path)
        if hit is not None:
            return hit
        tip = path[-1]
        nxt = [int(y) for y in g.neighbors(tip) if d[y] == d[tip] + 1 and admissible[y]]
        if not nxt:
            break
        path.append(min(nxt))

    dc = g.distances_from(start)
    r = 1
    while True:
        members = dc <= r
        if not admissible[members].all():
            return None
        inner = np.flatnonzero(members)
        if inner.size > size_cap:
            return None
        hit = qualifies(inner)
        if hit is not None:
            return hit
        r += 1
