"""Graph Laplacian, Dirichlet Laplacian, carre du champ calculus and CDE checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .graph import DomainSubset, TruncationError, VertexRef, WeightedGraph, ball, induced_subgraph


class DomainError(ValueError):
    """A vertex function was evaluated where it has no value."""


@dataclass(frozen=True)
class VertexFunction:
    """Real function on a subset of the vertices of a host graph.

    ``values`` has one slot per host vertex; slots outside ``domain`` hold NaN.
    """

    values: np.ndarray
    domain: np.ndarray

    @classmethod
    def total(cls, g: WeightedGraph, values) -> "VertexFunction":
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.shape != (g.n,):
            raise ValueError(f"expected {g.n} values, got {v.shape}")
        return cls(v.copy(), np.ones(g.n, dtype=bool))

    @classmethod
    def on(cls, g: WeightedGraph, verts: Iterable[VertexRef], values) -> "VertexFunction":
        idx = np.asarray([g.index(v) for v in verts], dtype=np.int64)
        vals = np.full(g.n, np.nan)
        vals[idx] = np.asarray(values, dtype=float).reshape(-1)
        dom = np.zeros(g.n, dtype=bool)
        dom[idx] = True
        return cls(vals, dom)

    @classmethod
    def from_mapping(cls, g: WeightedGraph, mapping: Mapping) -> "VertexFunction":
        return cls.on(g, list(mapping.keys()), list(mapping.values()))

    def __call__(self, x: int) -> float:
        if not self.domain[x]:
            raise DomainError(f"function undefined at vertex index {x}")
        return float(self.values[x])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.domain)


def _as_function(g: WeightedGraph, f) -> VertexFunction:
    if isinstance(f, VertexFunction):
        return f
    return VertexFunction.total(g, f)


def _closed_nbhd(g: WeightedGraph, verts: np.ndarray) -> np.ndarray:
    out = set(int(v) for v in verts)
    for v in verts:
        out.update(int(y) for y in g.neighbors(v))
    return np.asarray(sorted(out), dtype=np.int64)


def _require(g: WeightedGraph, f: VertexFunction, verts: np.ndarray, what: str) -> None:
    missing = verts[~f.domain[verts]]
    if missing.size:
        raise DomainError(f"{what} needs a value at vertex {g.ids[missing[0]]!r}")


def _resolve_at(g: WeightedGraph, f: VertexFunction, at) -> np.ndarray:
    if at is None:
        if f.domain.all():
            return np.arange(g.n)
        # largest set where the 1-neighbourhood is covered
        return np.array([x for x in f.support() if f.domain[g.neighbors(x)].all()], dtype=np.int64)
    return np.asarray([g.index(v) for v in at], dtype=np.int64)


def laplacian_apply(g: WeightedGraph, f, at: Iterable[VertexRef] | None = None) -> VertexFunction:
    """``Delta f(x) = mu(x)^{-1} sum_{y~x} w_xy (f(y) - f(x))`` for ``x`` in ``at``."""
    f = _as_function(g, f)
    at = _resolve_at(g, f, at)
    _require(g, f, _closed_nbhd(g, at), "Laplacian")
    out = np.empty(at.size)
    for k, x in enumerate(at):
        nb = g.neighbors(x)
        out[k] = np.dot(g.neighbor_weights(x), f.values[nb] - f.values[x]) / g.mu[x]
    return VertexFunction.on(g, at, out)


def dirichlet_laplacian_apply(g: WeightedGraph, om: DomainSubset, f) -> np.ndarray:
    """Dirichlet Laplacian of ``f`` given on ``om.interior`` (zero-extended elsewhere).

    ``f`` is either an array aligned with ``om.interior`` or a
    :class:`VertexFunction` defined there.  Returns values aligned with
    ``om.interior``.
    """
    if om.interior.size == 0:
        raise ValueError("empty interior")
    if isinstance(f, VertexFunction):
        _require(g, f, om.interior, "Dirichlet Laplacian")
        vals = f.values[om.interior]
    else:
        vals = np.asarray(f, dtype=float).reshape(-1)
        if vals.shape != om.interior.shape:
            raise ValueError("values must align with the domain interior")
    ext = np.zeros(g.n)
    ext[om.interior] = vals
    return laplacian_apply(g, ext, om.interior).values[om.interior]


def dirichlet_matrix(g: WeightedGraph, om: DomainSubset) -> np.ndarray:
    """Dense matrix of the Dirichlet Laplacian on ``om.interior``."""
    L = g.laplacian_matrix()[om.interior][:, om.interior]
    return L.toarray()


def gamma(g: WeightedGraph, f, h=None, at: Iterable[VertexRef] | None = None) -> VertexFunction:
    """``Gamma(f, h)(x) = (2 mu(x))^{-1} sum_{y~x} w_xy (f(y)-f(x)) (h(y)-h(x))``."""
    f = _as_function(g, f)
    h = f if h is None else _as_function(g, h)
    if at is None:
        both = VertexFunction(f.values, f.domain & h.domain)
        at = _resolve_at(g, both, None)
    else:
        at = np.asarray([g.index(v) for v in at], dtype=np.int64)
    nb = _closed_nbhd(g, at)
    _require(g, f, nb, "Gamma")
    _require(g, h, nb, "Gamma")
    out = np.empty(at.size)
    for k, x in enumerate(at):
        ys = g.neighbors(x)
        out[k] = np.dot(
            g.neighbor_weights(x), (f.values[ys] - f.values[x]) * (h.values[ys] - h.values[x])
        ) / (2 * g.mu[x])
    return VertexFunction.on(g, at, out)


def gamma2(g: WeightedGraph, f, at: Iterable[VertexRef] | None = None) -> VertexFunction:
    """``Gamma_2(f) = (Delta Gamma(f) - 2 Gamma(f, Delta f)) / 2``; needs ``f`` on 2-balls."""
    f = _as_function(g, f)
    if at is None:
        at = np.array(
            [x for x in f.support() if f.domain[_closed_nbhd(g, _closed_nbhd(g, np.array([x])))].all()],
            dtype=np.int64,
        )
    else:
        at = np.asarray([g.index(v) for v in at], dtype=np.int64)
    n1 = _closed_nbhd(g, at)
    _require(g, f, _closed_nbhd(g, n1), "Gamma_2")
    gf = gamma(g, f, at=n1)
    lf = laplacian_apply(g, f, at=n1)
    term1 = laplacian_apply(g, gf, at=at).values[at]
    term2 = gamma(g, f, lf, at=at).values[at]
    return VertexFunction.on(g, at, 0.5 * (term1 - 2.0 * term2))


# curvature-dimension checks -----------------------------------------------


@dataclass(frozen=True)
class CdeCheckResult:
    lhs: float
    rhs: float
    satisfied: bool
    variant: str
    witness_f: VertexFunction
    vacuous: bool = False
    mode: str = "verify"
    evaluations: int = 1

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self, g: WeightedGraph) -> dict:
        sup = self.witness_f.support()
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "satisfied": self.satisfied,
            "vacuous": self.vacuous,
            "variant": self.variant,
            "mode": self.mode,
            "evaluations": self.evaluations,
            "witness_f": {g.ids[i]: float(self.witness_f.values[i]) for i in sup},
        }


def cde_slack(lhs: float, rhs: float) -> float:
    return 1e-9 * (1.0 + abs(lhs) + abs(rhs))


class _LocalCde:
    """Vectorised CDE terms at one vertex using the induced 2-ball."""

    def __init__(self, g: WeightedGraph, x: int):
        verts = ball(g, x, 2)
        sub, vmap = induced_subgraph(g, verts)
        self.vmap = vmap
        self.x = int(np.flatnonzero(vmap == x)[0])
        self.n1 = np.asarray(sorted({self.x, *map(int, sub.neighbors(self.x))}), dtype=np.int64)
        self.W = sub.weight_matrix().toarray()
        self.mu = sub.mu
        self.m = self.W.sum(axis=1)

    def _lap(self, f, rows):
        return (self.W[rows] @ f - self.m[rows] * f[rows]) / self.mu[rows]

    def _gam(self, f, h, rows):
        df = f[None, :] - f[rows, None]
        dh = h[None, :] - h[rows, None]
        return (self.W[rows] * df * dh).sum(axis=1) / (2 * self.mu[rows])

    def terms(self, f: np.ndarray):
        """Return (lhs, Delta f(x), f(x) Delta log f(x), Gamma f(x)) for local values ``f``."""
        n1, x = self.n1, self.x
        gf_n1 = self._gam(f, f, n1)
        lf_n1 = self._lap(f, n1)
        gfull = np.zeros_like(f)
        gfull[n1] = gf_n1
        lfull = np.zeros_like(f)
        lfull[n1] = lf_n1
        xi = np.array([x])
        # rows of x only touch n1, so zero padding outside n1 is harmless
        g2 = 0.5 * (self._lap(gfull, xi)[0] - 2.0 * self._gam(f, lfull, xi)[0])
        ratio = np.zeros_like(f)
        ratio[n1] = gf_n1 / f[n1]
        cross = self._gam(f, ratio, xi)[0]
        lhs = g2 - cross
        lap_x = self._lap(f, xi)[0]
        loglap = f[x] * self._lap(np.log(f), xi)[0]
        gam_x = gf_n1[np.searchsorted(n1, x)]
        return lhs, lap_x, loglap, gam_x


def _cde_sides(loc: _LocalCde, f: np.ndarray, n: float, K: float, variant: str):
    lhs, lap_x, loglap, gam_x = loc.terms(f)
    lead = lap_x if variant == "CDE" else loglap
    rhs = lead**2 / n + K * gam_x
    vacuous = variant == "CDE" and not lap_x < 0
    return lhs, rhs, vacuous


def cde_check(
    g: WeightedGraph,
    x: VertexRef,
    n: float,
    K: float,
    variant: str = "CDE'",
    mode: str = "verify",
    f=None,
    budget: int = 10_000,
    seed: int | None = 0,
    sigma: float = 1.0,
) -> CdeCheckResult:
    """Evaluate or try to falsify ``CDE(x, n, K)`` / ``CDE'(x, n, K)``.

    In ``verify`` mode ``f`` must be positive on the 2-ball of ``x``.  In
    ``falsify`` mode positive functions supported on the 2-ball are sampled
    (log-normal values) and the worst sample is refined by coordinate
    descent on the margin ``lhs - rhs``; finding no counterexample proves
    nothing.
    """
    variant = {"CDE": "CDE", "CDE'": "CDE'", "CDEp": "CDE'", "CDE_prime": "CDE'"}.get(variant)
    if variant is None:
        raise ValueError("variant must be CDE or CDE'")
    if n <= 0:
        raise ValueError("n must be positive")
    xi = g.index(x)
    if g.is_truncation and g.depth(xi) + 2 > g.truncation_radius:
        raise TruncationError("vertex too close to the truncation edge for a 2-ball check")
    loc = _LocalCde(g, xi)

    if mode == "verify":
        if f is None:
            raise ValueError("verify mode needs a function f")
        fv = _as_function(g, f)
        _require(g, fv, loc.vmap, "CDE check")
        local = fv.values[loc.vmap]
        if not (local > 0).all():
            raise ValueError("f must be positive on the 2-ball")
        lhs, rhs, vac = _cde_sides(loc, local, n, K, variant)
        ok = vac or lhs >= rhs - cde_slack(lhs, rhs)
        wit = VertexFunction.on(g, loc.vmap, local)
        return CdeCheckResult(float(lhs), float(rhs), bool(ok), variant, wit, vac, "verify")
    if mode != "falsify":
        raise ValueError("mode must be 'verify' or 'falsify'")

    rng = np.random.default_rng(seed)
    k = loc.vmap.size

    def margin(logf):
        lhs, rhs, vac = _cde_sides(loc, np.exp(logf), n, K, variant)
        return (np.inf if vac else lhs - rhs), lhs, rhs, vac

    n_sample = max(1, int(0.8 * budget))
    best = None
    scales = sigma * np.array([0.1, 0.3, 1.0, 2.0])
    for i in range(n_sample):
        logf = rng.normal(0.0, scales[i % scales.size], size=k)
        mg = margin(logf)
        if best is None or mg[0] < best[0][0]:
            best = (mg, logf)
    evals = n_sample
    (mg, lhs, rhs, vac), logf = best
    step = 0.5 * sigma
    while evals < budget and step > 1e-8:
        improved = False
        for j in range(k):
            for sgn in (1.0, -1.0):
                if evals >= budget:
                    break
                trial = logf.copy()
                trial[j] += sgn * step
                cand = margin(trial)
                evals += 1
                if cand[0] < mg:
                    (mg, lhs, rhs, vac), logf = cand, trial
                    improved = True
        if not improved:
            step *= 0.5
    wit = VertexFunction.on(g, loc.vmap, np.exp(logf))
    ok = vac or lhs >= rhs - cde_slack(lhs, rhs)
    return CdeCheckResult(float(lhs), float(rhs), bool(ok), variant, wit, bool(vac), "falsify", evals)
