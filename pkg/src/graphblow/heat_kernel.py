"""Heat kernel ``P(t, x, y)`` on finite graphs, computed two independent ways.

``P(t, x, y) = [exp(t Delta)]_{xy} / mu(y)``; the matrix exponential comes
either from scaling-and-squaring with a diagonal Pade core (``expm``) or from
the power series ``sum t^n/n! Delta^n`` applied to coordinate indicators
(``series``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .graph import TruncationError, VertexRef, WeightedGraph, graph_constants

# Pade numerator coefficients and backward-error thresholds (double precision).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}


def expm_pade(A: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [m/m] Pade approximant."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    ident = np.eye(n)
    norm = np.linalg.norm(A, 1)
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            b = _PADE[m]
            powers = [ident, A @ A]
            while len(powers) < (m + 1) // 2:
                powers.append(powers[-1] @ powers[1])
            U = A @ sum(b[2 * j + 1] * powers[j] for j in range(len(powers)))
            V = sum(b[2 * j] * powers[j] for j in range(len(powers)))
            return np.linalg.solve(V - U, V + U)
    s = max(0, int(math.ceil(math.log2(norm / _THETA[13])))) if norm > 0 else 0
    As = A / 2.0**s
    b = _PADE[13]
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2
              + b[1] * ident)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


@dataclass(frozen=True)
class KernelMatrix:
    """``entries[x, y] = P(t, x, y)`` on a finite graph."""

    t: float
    entries: np.ndarray
    method: str
    mu: np.ndarray = field(repr=False)
    terms: int | None = None

    def apply(self, f) -> np.ndarray:
        """``sum_y P(t, x, y) f(y) mu(y)`` for every ``x``."""
        return self.entries @ (np.asarray(f, dtype=float) * self.mu)

    def mass(self) -> np.ndarray:
        return self.apply(np.ones_like(self.mu))


def series_terms(d_mu: float, tau: float, tol: float = 1e-16, cap: int = 200) -> int:
    """Smallest N with ``(2 D_mu tau)^N / N! < tol``."""
    a = 2.0 * d_mu * tau
    term, N = 1.0, 0
    while term >= tol:
        N += 1
        term *= a / N
        if N > cap:
            raise ValueError(f"series needs more than {cap} terms (2*D_mu*t = {a:.3g})")
    return N


def _series_exp(L: np.ndarray, t: float, d_mu: float, slice_bound: float, max_terms: int):
    """``exp(t L)`` via Taylor sums on slices with ``2 D_mu tau <= slice_bound``, then composition."""
    n = L.shape[0]
    a = 2.0 * d_mu * t
    k = max(1, int(math.ceil(a / slice_bound))) if slice_bound else 1
    tau = t / k
    N = series_terms(d_mu, tau, cap=max_terms)
    Q = np.eye(n)
    term = np.eye(n)
    for j in range(1, N + 1):
        term = (tau / j) * (L @ term)
        Q += term
    # exp(tL) = Q^k by the semigroup property, via binary powering
    out = np.eye(n)
    base = Q
    while k:
        if k & 1:
            out = out @ base
        k >>= 1
        if k:
            base = base @ base
    return out, N


def heat_kernel(
    g: WeightedGraph,
    t: float,
    method: str = "expm",
    slice_bound: float = 0.5,
    max_terms: int = 200,
) -> KernelMatrix:
    """Heat kernel of a finite graph at time ``t``.

    ``expm`` exponentiates the symmetrised generator
    ``mu^{-1/2} (W - diag m) mu^{-1/2}`` by Pade scaling-and-squaring.
    ``series`` sums ``tau^n/n! Delta^n`` on time slices short enough that
    ``(2 D_mu tau)^N / N!`` falls below 1e-16 within ``max_terms`` terms, and
    composes slices with the semigroup law.  ``slice_bound=None`` disables
    slicing (plain series; loses accuracy for large ``D_mu t``).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    mu = g.mu
    if t == 0:
        return KernelMatrix(0.0, np.diag(1.0 / mu), method, mu, 0)
    if method == "expm":
        E = expm_pade(t * g.symmetric_laplacian())
        s = 1.0 / np.sqrt(mu)
        P = s[:, None] * E * s[None, :]
        return KernelMatrix(float(t), P, "expm", mu)
    if method == "series":
        L = g.laplacian_matrix().toarray()
        d_mu = graph_constants(g).d_mu
        E, N = _series_exp(L, t, d_mu, slice_bound, max_terms)
        return KernelMatrix(float(t), E / mu[None, :], "series", mu, N)
    raise ValueError(f"unknown method {method!r}")


class HeatSemigroup:
    """Exact action of ``exp(t Delta)`` through the eigendecomposition of the symmetrised generator.

    Used where the kernel is needed at many times (quadrature, root finding).
    """

    def __init__(self, g: WeightedGraph, pinned: Iterable[int] | None = None):
        self.g = g
        n = g.n
        free = np.ones(n, dtype=bool)
        if pinned is not None:
            free[np.asarray(list(pinned), dtype=np.int64)] = False
        self.free = np.flatnonzero(free)
        S = g.symmetric_laplacian()[np.ix_(self.free, self.free)]
        self.evals, self.Q = sla.eigh(S)
        self.sq = np.sqrt(g.mu[self.free])

    def to_modes(self, f: np.ndarray) -> np.ndarray:
        return self.Q.T @ (self.sq * np.asarray(f, dtype=float)[self.free])

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        out = np.zeros(self.g.n if c.ndim == 1 else (self.g.n,) + c.shape[1:])
        out[self.free] = (self.Q @ c) / (self.sq if c.ndim == 1 else self.sq[:, None])
        return out

    def apply(self, t: float, f) -> np.ndarray:
        """``sum_y P(t, x, y) f(y) mu(y)``, with ``f`` pinned to zero off the free set."""
        return self.from_modes(np.exp(self.evals * t) * self.to_modes(f))

    def kernel(self, t: float) -> np.ndarray:
        E = (self.Q * np.exp(self.evals * t)) @ self.Q.T
        out = np.zeros((self.g.n, self.g.n))
        out[np.ix_(self.free, self.free)] = E / np.outer(self.sq, self.sq)
        return out


# audits ---------------------------------------------------------------------


@dataclass
class AuditReport:
    t_grid: list
    positivity: float = 0.0
    symmetry: float = 0.0
    mass: float = 0.0
    semigroup: float = 0.0
    initial: float = 0.0
    derivative: float = 0.0
    cross_method: float = 0.0
    min_entry: float = np.inf
    per_time: list = field(default_factory=list)

    def violations(self) -> dict:
        return {
            "positivity": self.positivity,
            "symmetry": self.symmetry,
            "mass": self.mass,
            "semigroup": self.semigroup,
            "initial": self.initial,
            "derivative": self.derivative,
            "cross_method": self.cross_method,
        }


def kernel_audit(
    g: WeightedGraph,
    t_grid: Sequence[float],
    methods: Sequence[str] = ("expm", "series"),
    fd_step: float = 1e-4,
) -> AuditReport:
    """Check positivity, symmetry, unit mass, the semigroup law and ``P_t = Delta P``.

    Violations are reported as maxima over the grid and both methods; the
    cross-method entry is the largest expm/series disagreement.  The time
    derivative is a Richardson-extrapolated central difference.
    """
    t_grid = [float(t) for t in t_grid]
    if any(t <= 0 for t in t_grid):
        raise ValueError("t_grid must be positive")
    rep = AuditReport(t_grid)
    mu = g.mu
    Lmat = g.laplacian_matrix().toarray()
    P0 = heat_kernel(g, 0.0)
    cache = {}

    def kern(t, meth):
        key = (round(t, 15), meth)
        if key not in cache:
            cache[key] = heat_kernel(g, t, meth).entries
        return cache[key]

    for meth in methods:
        for t in t_grid:
            P = kern(t, meth)
            rep.min_entry = min(rep.min_entry, float(P.min()))
            pos = float(max(0.0, -P.min()))
            sym = float(np.max(np.abs(P - P.T)))
            mass = float(np.max(np.abs(P @ mu - 1.0)))
            h = fd_step * max(t, 1.0)
            h = min(h, t / 2)
            d1 = (heat_kernel(g, t + h, meth).entries - heat_kernel(g, t - h, meth).entries) / (2 * h)
            d2 = (heat_kernel(g, t + h / 2, meth).entries - heat_kernel(g, t - h / 2, meth).entries) / h
            deriv = (4 * d2 - d1) / 3
            der = float(np.max(np.abs(deriv - Lmat @ P)))
            rep.positivity = max(rep.positivity, pos)
            rep.symmetry = max(rep.symmetry, sym)
            rep.mass = max(rep.mass, mass)
            rep.derivative = max(rep.derivative, der)
            rep.per_time.append({"t": t, "method": meth, "positivity": pos, "symmetry": sym,
                                 "mass": mass, "derivative": der})
        for t in t_grid:
            # composition with P(0) must reproduce P(t)
            comp0 = P0.entries @ (mu[:, None] * kern(t, meth))
            rep.initial = max(rep.initial, float(np.max(np.abs(comp0 - kern(t, meth)))))
            for s in t_grid:
                lhs = kern(t, meth) @ (mu[:, None] * kern(s, meth))
                rep.semigroup = max(rep.semigroup, float(np.max(np.abs(lhs - kern(t + s, meth)))))
    if len(methods) > 1:
        for t in t_grid:
            ref = kern(t, methods[0])
            for meth in methods[1:]:
                rep.cross_method = max(rep.cross_method, float(np.max(np.abs(ref - kern(t, meth)))))
    return rep


@dataclass(frozen=True)
class SmoothedInfimum:
    """``sigma0 = min_x F(tau, x)`` with ``F(t, x) = sum_y P(t, x, y) psi(y) mu(y)``."""

    tau: float
    sigma0: float
    argmin: int
    evaluator: Callable[[float, int], float] = field(repr=False)


def smoothed_infimum(
    g: WeightedGraph,
    tau: float,
    psi,
    probe: Iterable[VertexRef] | None = None,
) -> SmoothedInfimum:
    """Smallest heat-smoothed value of ``psi`` at time ``tau`` over ``probe``.

    On a truncation the default probe is the set of vertices at least
    ``ceil(2 + 2 sqrt(D_mu tau))`` hops inside the cut.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    psi = np.asarray(psi, dtype=float)
    if (psi < 0).any():
        raise ValueError("psi must be nonnegative")
    sg = HeatSemigroup(g)
    if probe is None:
        if g.is_truncation:
            margin = int(math.ceil(2 + 2 * math.sqrt(graph_constants(g).d_mu * tau)))
            depth = g.distances_from(g.center)
            idx = np.flatnonzero(depth <= g.truncation_radius - margin)
            if idx.size == 0:
                raise TruncationError("no probe vertex respects the interior margin")
        else:
            idx = np.arange(g.n)
    else:
        idx = np.asarray([g.index(v) for v in probe], dtype=np.int64)
    F = sg.apply(tau, psi)
    k = int(idx[np.argmin(F[idx])])

    def evaluator(t: float, x: int = k) -> float:
        return float(sg.apply(t, psi)[x]) if t > 0 else float(psi[x])

    return SmoothedInfimum(float(tau), float(F[k]), k, evaluator)
