"""Forward integration of ``u_t = Delta u + u^p``, blow-up bracketing and cross-checks.

Three solvers live here: an embedded Dormand-Prince 5(4) integrator with PI
step control, a monotone Picard iteration on the shifted linear problem solved
mode by mode with the heat semigroup, and a Duhamel residual that replays a
stored trajectory through the variation-of-constants formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import GraphFamily, WeightedGraph, graph_constants
from .heat_kernel import HeatSemigroup
from .operators import VertexFunction


class StepUnderflowError(RuntimeError):
    """The step size collapsed before the blow-up threshold was reached."""

    def __init__(self, t: float, h: float, umax: float, accepted: int, rejected: int):
        super().__init__(
            f"step underflow at t={t:.12g}: h={h:.3e}, max u={umax:.3e}, "
            f"{accepted} accepted / {rejected} rejected steps"
        )
        self.t, self.h, self.umax = t, h, umax


class SolverFault(RuntimeError):
    """The numerical solution left the region the equation guarantees (e.g. went negative)."""


class OrderingViolation(RuntimeError):
    """Picard iterates lost their order: the Lipschitz shift or the bounding pair is defective."""


class LifespanConvergenceError(RuntimeError):
    def __init__(self, msg: str, estimate: "LifespanEstimate"):
        super().__init__(msg)
        self.estimate = estimate


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
# continuous extension: y(t0 + theta h) = y0 + h * K^T @ _P @ [theta, theta^2, theta^3, theta^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5


@dataclass(frozen=True)
class Step:
    """One accepted step, kept for dense output."""

    t0: float
    h: float
    y0: np.ndarray
    K: np.ndarray  # (7, n) stage derivatives

    def at(self, t: float) -> np.ndarray:
        th = (t - self.t0) / self.h
        return self.y0 + self.h * (self.K.T @ (_P @ np.array([th, th**2, th**3, th**4])))


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    min_dt: float = math.inf


@dataclass
class EvolutionResult:
    """Trajectory samples, outcome and solver statistics.

    ``status`` is ``"completed"`` (reached ``t_end``) or ``"blowup"``; for
    blow-up, ``bracket`` encloses the lifespan and ``t_stop`` is the time the
    threshold was crossed.
    """

    samples: list
    status: str
    t_end: float
    bracket: tuple | None
    t_stop: float | None
    stats: StepStats
    p: float
    final: np.ndarray
    u_big: float
    pinned: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    steps: list | None = None
    time_error: float = 0.0  # integration-error allowance on t_stop, rtol * t_stop

    @property
    def blew_up(self) -> bool:
        return self.status == "blowup"

    @property
    def lifespan_estimate(self) -> float:
        """Start of the ODE tail: ``t_stop + |u|^{1-p}/(p-1)`` (``inf`` when completed)."""
        if not self.blew_up:
            return math.inf
        umax = float(np.max(self.final))
        return float(self.t_stop + umax ** (1 - self.p) / (self.p - 1))

    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    def values(self) -> np.ndarray:
        return np.array([u.values for _, u in self.samples])

    def dense(self, t: float) -> np.ndarray:
        if self.steps is None:
            raise ValueError("trajectory was integrated without dense output")
        ts = [s.t0 for s in self.steps]
        k = max(0, min(int(np.searchsorted(ts, t, side="right")) - 1, len(ts) - 1))
        return self.steps[k].at(t)

    def to_rows(self, g: WeightedGraph) -> list[tuple]:
        return [(t, g.ids[i], float(u.values[i])) for t, u in self.samples for i in range(g.n)]


def tail_epsilon(d_mu: float, u_big: float, p: float) -> float:
    """Relative width of the ODE-tail bracket: ``10 * 2 D_mu * U^{1-p}``."""
    return 10.0 * 2.0 * d_mu * u_big ** (1 - p)


def threshold_for(d_mu: float, p: float, lifespan_tol: float, floor: float = 1e3) -> float:
    """Smallest decade ``U >= floor`` whose tail bracket ``(1+eps) U^{1-p}/(p-1)`` fits ``lifespan_tol``.

    Larger thresholds only shrink the tail below what double-precision time can resolve.
    """
    U = floor
    while (1 + tail_epsilon(d_mu, U, p)) * U ** (1 - p) / (p - 1) > lifespan_tol:
        U *= 10.0
        if U > 1e300:
            raise ValueError("lifespan tolerance unattainable in double precision")
    return U


def _as_values(g: WeightedGraph, u0) -> np.ndarray:
    if isinstance(u0, VertexFunction):
        if not u0.domain.all():
            raise ValueError("initial data must be defined on every vertex")
        return u0.values.astype(float).copy()
    if np.isscalar(u0):
        return np.full(g.n, float(u0))
    v = np.asarray(u0, dtype=float).reshape(-1)
    if v.shape != (g.n,):
        raise ValueError(f"initial data has {v.size} values for {g.n} vertices")
    return v.copy()


def _pinned_set(g: WeightedGraph, boundary) -> np.ndarray:
    if boundary in (None, "none"):
        return np.empty(0, dtype=np.int64)
    if boundary == "dirichlet":
        if not g.is_truncation:
            raise ValueError("boundary='dirichlet' needs a truncation or an explicit vertex list")
        return g.sphere()
    return np.asarray([g.index(v) for v in boundary], dtype=np.int64)


def integrate(
    g: WeightedGraph,
    u0,
    p: float,
    T_max: float = 100.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    u_big: float | None = None,
    boundary="none",
    t_eval: Sequence[float] | None = None,
    lifespan_tol: float = 1e-9,
    dense: bool = False,
    max_steps: int = 2_000_000,
) -> EvolutionResult:
    """Integrate ``u_t = Delta u + u^p`` from ``u0`` until ``T_max`` or blow-up.

    ``boundary`` is ``"none"`` (the whole finite graph), ``"dirichlet"`` (pin
    the truncation sphere to zero) or an explicit list of pinned vertices.
    Blow-up is declared when ``max u`` reaches ``u_big``; the default
    threshold is the smallest decade from 1e3 up whose ODE-tail bracket is
    narrower than ``lifespan_tol``.  Steps are clipped to land on ``t_eval``.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    y = _as_values(g, u0)
    if not np.all(np.isfinite(y)) or (y < 0).any():
        raise ValueError("initial data must be finite and nonnegative")
    pinned = _pinned_set(g, boundary)
    free = np.ones(g.n, dtype=bool)
    free[pinned] = False
    y[pinned] = 0.0
    L = g.laplacian_matrix()
    d_mu = graph_constants(g).d_mu
    if u_big is None:
        u_big = threshold_for(d_mu, p, lifespan_tol)
    h_max = 1.0 / (2.0 * d_mu) if d_mu > 0 else math.inf
    sample_t = sorted(set([0.0] + [float(t) for t in (t_eval if t_eval is not None else [])]))
    sample_t = [t for t in sample_t if t <= T_max]
    if T_max < math.inf and (not sample_t or sample_t[-1] < T_max) and t_eval is None:
        sample_t.append(float(T_max))

    def rhs(u):
        du = L @ u + np.maximum(u, 0.0) ** p
        du[~free] = 0.0
        return du

    stats = StepStats()
    steps = [] if dense else None
    samples = [(0.0, VertexFunction.total(g, y))]
    next_sample = 1
    t = 0.0
    k1 = rhs(y)
    scale0 = atol + rtol * np.abs(y)
    d0 = np.max(np.abs(y) / scale0)
    d1 = np.max(np.abs(k1) / scale0)
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h = min(h, h_max)
    err_prev = 1.0
    rejected_last = False
    n = g.n
    K = np.empty((7, n))

    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            if np.max(y) >= u_big:
                T_lo = t
                tau = float(np.max(y)) ** (1 - p) / (p - 1)
                bracket = (float(T_lo), float(t + (1 + tail_epsilon(d_mu, float(np.max(y)), p)) * tau))
                return EvolutionResult(samples, "blowup", t, bracket, t, stats, p, y.copy(),
                                       u_big, pinned, steps, float(rtol * t))
            if t >= T_max:
                return EvolutionResult(samples, "completed", t, None, None, stats, p, y.copy(),
                                       u_big, pinned, steps)
            if stats.accepted + stats.rejected >= max_steps:
                raise StepUnderflowError(t, h, float(np.max(y)), stats.accepted, stats.rejected)
            target = sample_t[next_sample] if next_sample < len(sample_t) else T_max
            h = min(h, h_max)
            hit = t + h >= target
            if hit:
                h = target - t
            if h <= 4 * np.spacing(max(1.0, abs(t))):
                raise StepUnderflowError(t, h, float(np.max(y)), stats.accepted, stats.rejected)
            K[0] = k1
            for i in range(1, 7):
                K[i] = rhs(y + h * (np.asarray(_A[i]) @ K[:i]))
            y_new = y + h * (_B5 @ K[:7])
            err_vec = h * (_E @ K)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(err_vec) / scale))
            if not np.isfinite(err):
                err = math.inf
            if err <= 1.0:
                if (y_new < -max(10 * atol, 1e-9 * np.max(np.abs(y_new)))).any():
                    raise SolverFault(f"negative value {y_new.min():.3e} at t={t + h:.12g}")
                if dense:
                    steps.append(Step(t, h, y.copy(), K.copy()))
                stats.accepted += 1
                stats.min_dt = min(stats.min_dt, h)
                t = target if hit else t + h
                y = y_new
                k1 = K[6].copy()  # first-same-as-last
                if hit and next_sample < len(sample_t) and target == sample_t[next_sample]:
                    samples.append((t, VertexFunction.total(g, y)))
                    next_sample += 1
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = _SAFETY * err ** (-_ALPHA) * err_prev**_BETA
                    fac = min(5.0, max(0.2, fac))
                if rejected_last:
                    fac = min(1.0, fac)
                h_used = h
                h = h_used * fac
                err_prev = max(err, 1e-4)
                rejected_last = False
            else:
                stats.rejected += 1
                fac = 0.2 if not np.isfinite(err) else max(0.2, _SAFETY * err ** (-1 / 5))
                h *= fac
                rejected_last = True


# lifespan -------------------------------------------------------------------


@dataclass
class LifespanEstimate:
    """Lifespan estimate with its enclosure and the truncation history.

    ``T_est`` is ``inf`` when no blow-up occurred before ``T_max``; then
    ``bracket = (T_max, inf)`` and ``status`` says so.
    """

    T_est: float
    bracket: tuple
    truncation_radii: list
    converged: bool
    p: float
    lam: float
    status: str = "blowup"
    history: list = field(default_factory=list)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "T_est": self.T_est,
            "bracket": list(self.bracket),
            "truncation_radii": list(self.truncation_radii),
            "converged": self.converged,
            "p": self.p,
            "lambda": self.lam,
            "status": self.status,
            "history": self.history,
            "note": self.note,
        }


PsiRule = Callable[[WeightedGraph], np.ndarray]


def resolve_psi(g: WeightedGraph, psi) -> np.ndarray:
    """Evaluate an initial-data rule (constant, callable on the graph, array or VertexFunction)."""
    if callable(psi) and not isinstance(psi, VertexFunction):
        return _as_values(g, psi(g))
    return _as_values(g, psi)


def estimate_lifespan(
    gen,
    psi,
    lam: float,
    p: float,
    tol: float = 1e-6,
    radius_schedule: Sequence[int] | None = None,
    T_max: float = 100.0,
    rtol: float = 1e-10,
    lifespan_tol: float = 1e-9,
) -> LifespanEstimate:
    """Lifespan of the solution with data ``lam * psi``.

    A finite graph takes one integration on the whole graph.  A
    :class:`GraphFamily` is truncated at the radii of ``radius_schedule``
    (default 8, 16, 32, 64) with the sphere pinned to zero; truncated
    solutions are subsolutions, so ``T(R)`` decreases towards the limit and
    the run stops once successive values differ by at most ``tol``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if isinstance(gen, WeightedGraph):
        u0 = lam * resolve_psi(gen, psi)
        if not (u0 > 0).any():
            raise ValueError("psi must not vanish identically")
        res = integrate(gen, u0, p, T_max=T_max, rtol=rtol, lifespan_tol=lifespan_tol)
        if res.blew_up:
            return LifespanEstimate(res.lifespan_estimate, res.bracket, [], True, p, lam,
                                    history=[{"radius": None, "T": res.lifespan_estimate}])
        return LifespanEstimate(math.inf, (T_max, math.inf), [], True, p, lam,
                                status="no blow-up before T_max")
    if not isinstance(gen, GraphFamily):
        raise TypeError("gen must be a WeightedGraph or a GraphFamily")
    radii = list(radius_schedule or [8, 16, 32, 64])
    history, used = [], []
    prev = None
    est = None
    for R in radii:
        g = gen.truncate(R)
        u0 = lam * resolve_psi(g, psi)
        if not (u0[g.distances_from(g.center) < R] > 0).any():
            raise ValueError("psi vanishes on the truncation interior")
        res = integrate(g, u0, p, T_max=T_max, rtol=rtol, boundary="dirichlet",
                        lifespan_tol=lifespan_tol)
        used.append(R)
        T = res.lifespan_estimate
        history.append({"radius": R, "T": T, "bracket": list(res.bracket) if res.bracket else None})
        status = "blowup" if res.blew_up else "no blow-up before T_max"
        bracket = res.bracket if res.blew_up else (T_max, math.inf)
        converged = prev is not None and (
            (math.isinf(T) and math.isinf(prev)) or abs(T - prev) <= tol
        )
        est = LifespanEstimate(T, bracket, used.copy(), converged, p, lam, status, history,
                               "limit of Dirichlet truncations, approached from above")
        if converged:
            return est
        prev = T
    raise LifespanConvergenceError(
        "truncated lifespans did not settle: "
        + ", ".join(f"T({h['radius']})={h['T']:.12g}" for h in history),
        est,
    )


# monotone iteration ----------------------------------------------------------

_NODES = 16


@dataclass
class MonotoneResult:
    """Converged Picard solution on ``[0, T]`` with the gap history."""

    grid: np.ndarray  # interval endpoints
    nodes: np.ndarray  # (K, 16) collocation times
    upper: np.ndarray  # (K, 16, n) values at the nodes
    lower: np.ndarray
    end_upper: np.ndarray  # (K + 1, n) values at the endpoints
    end_lower: np.ndarray
    gaps: list
    iterations: int
    converged: bool

    @property
    def solution(self) -> np.ndarray:
        return 0.5 * (self.upper + self.lower)

    def evaluate(self, t: float) -> np.ndarray:
        """Midpoint of the final bracket at time ``t``, by Lagrange interpolation in the interval."""
        k = int(np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, len(self.grid) - 2))
        if t == self.grid[k]:
            return 0.5 * (self.end_upper[k] + self.end_lower[k])
        if t == self.grid[k + 1]:
            return 0.5 * (self.end_upper[k + 1] + self.end_lower[k + 1])
        ell = _lagrange(self.nodes[k], t)
        return ell @ self.solution[k]


def _lagrange(nodes: np.ndarray, s) -> np.ndarray:
    """Lagrange basis values ``ell_i(s)``; ``s`` scalar or 1-D array (returns (len(s), 16))."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    diff = s[:, None] - nodes[None, :]
    out = np.ones((s.size, nodes.size))
    for i in range(nodes.size):
        for j in range(nodes.size):
            if i != j:
                out[:, i] *= diff[:, j] / (nodes[i] - nodes[j])
    return out if out.shape[0] > 1 else out[0]


def _check_defect(sg_L, fn, times, p, sign, what, tol):
    """Verify ``sign * (w_t - Delta w - w^p) >= -tol`` at the given times."""
    for t in times:
        h = 1e-6 * max(1.0, t)
        lo = max(t - h, 0.0)
        w_t = (np.asarray(fn(t + h)) - np.asarray(fn(lo))) / (t + h - lo)
        w = np.asarray(fn(t), dtype=float)
        defect = w_t - sg_L @ w - np.maximum(w, 0) ** p
        scale = 1.0 + np.max(np.abs(w)) ** p
        if (sign * defect < -tol * scale).any():
            raise OrderingViolation(f"{what} fails its differential inequality at t={t:.6g}")


def monotone_iterate(
    g: WeightedGraph,
    psi,
    p: float,
    T: float,
    lower: Callable[[float], np.ndarray] | None = None,
    upper: Callable[[float], np.ndarray] | None = None,
    M: float | None = None,
    iters: int = 300,
    tol: float = 1e-13,
    check_bounds: bool = True,
) -> MonotoneResult:
    """Picard iteration between a subsolution and a supersolution on ``[0, T]``.

    Each sweep solves ``w_t - Delta w + M w = v^p + M v`` with ``w(0) = psi``
    exactly in the eigenbasis of ``Delta``; the source is interpolated at 16
    Gauss-Legendre nodes per time interval, with intervals short enough that
    ``(2 D_mu + M) h <= 4``.  Starting from ``lower`` and ``upper`` the
    iterates stay ordered and squeeze the solution; ``gaps`` records
    ``sup(upper_k - lower_k)``.

    ``psi`` is the full initial datum (already scaled).  Defaults: ``lower = 0``
    and ``upper`` the spatially constant blow-up profile started from
    ``max psi``, which requires ``T`` below ``max(psi)^{1-p}/(p-1)``.
    """
    u0 = _as_values(g, psi)
    if (u0 < 0).any():
        raise ValueError("psi must be nonnegative")
    top = float(u0.max())
    if upper is None:
        if top > 0:
            T_ode = top ** (1 - p) / (p - 1)
            if T >= T_ode:
                raise ValueError("T must lie below the ODE blow-up time of max psi")
            upper = lambda t: np.full(g.n, (top ** (1 - p) - (p - 1) * t) ** (-1 / (p - 1)))
        else:
            upper = lambda t: np.zeros(g.n)
    if lower is None:
        lower = lambda t: np.zeros(g.n)
    sg = HeatSemigroup(g)
    L = g.laplacian_matrix()
    d_mu = graph_constants(g).d_mu
    probe = np.linspace(0.0, T, 65)
    sup_upper = max(float(np.max(upper(t))) for t in probe)
    if M is None:
        M = p * sup_upper ** (p - 1)
    elif M < p * sup_upper ** (p - 1) * (1 - 1e-12):
        raise ValueError("M is below the Lipschitz constant of u^p on the order interval")
    if check_bounds:
        if (lower(0.0) > u0 + 1e-12).any() or (upper(0.0) < u0 - 1e-12).any():
            raise OrderingViolation("initial data not between the bounds")
        _check_defect(L, upper, probe[1:-1], p, +1, "upper", 1e-5)
        _check_defect(L, lower, probe[1:-1], p, -1, "lower", 1e-5)

    K = max(1, int(math.ceil((2 * d_mu + M) * T / 4.0)))
    grid = np.linspace(0.0, T, K + 1)
    h = T / K
    xg, _ = np.polynomial.legendre.leggauss(_NODES)
    xq, wq = np.polynomial.legendre.leggauss(2 * _NODES)
    rel = 0.5 * (xg + 1.0)  # nodes in [0, 1]
    targets = np.concatenate([rel, [1.0]])  # 16 nodes + right endpoint
    lam = sg.evals - M  # exponent per mode
    # C[j, i, k] = int_0^{s_j} exp(lam_k (s_j - s)) ell_i(s) ds  (interval scaled to length h)
    nodes_abs = rel * h
    C = np.empty((targets.size, _NODES, lam.size))
    for j, sj in enumerate(targets * h):
        s = 0.5 * sj * (xq + 1.0)
        w = 0.5 * sj * wq
        ell = _lagrange(nodes_abs, s)  # (32, 16)
        ex = np.exp(np.outer(sj - s, lam))  # (32, modes)
        C[j] = np.einsum("q,qi,qk->ik", w, ell, ex)
    E = np.exp(np.outer(targets * h, lam))  # (17, modes)
    nodes = grid[:-1, None] + nodes_abs[None, :]

    def sweep(v_nodes):
        """One Picard map: source from ``v`` at the nodes, returns (node values, endpoint values)."""
        out = np.empty_like(v_nodes)
        ends = np.empty((K + 1, g.n))
        c = sg.to_modes(u0)
        ends[0] = u0
        for k in range(K):
            v = v_nodes[k]
            src = np.maximum(v, 0) ** p + M * v
            G = np.array([sg.to_modes(row) for row in src])  # (16, modes)
            c_t = E * c[None, :] + np.einsum("jik,ik->jk", C, G)
            vals = np.array([sg.from_modes(row) for row in c_t])
            out[k] = vals[:_NODES]
            ends[k + 1] = vals[_NODES]
            c = c_t[_NODES]
        return out, ends

    up = np.array([[upper(t) for t in row] for row in nodes], dtype=float)
    lo = np.array([[lower(t) for t in row] for row in nodes], dtype=float)
    gaps = [float(np.max(up - lo))]
    converged = False
    up_end = lo_end = None
    it = 0
    for it in range(1, iters + 1):
        up_new, up_end = sweep(up)
        lo_new, lo_end = sweep(lo)
        slack = 1e-10 * (1.0 + np.max(np.abs(up_new)))
        if (lo_new > up_new + slack).any():
            raise OrderingViolation(f"lower iterate exceeds upper at sweep {it}")
        if (up_new > up + slack).any() or (lo_new < lo - slack).any():
            raise OrderingViolation(f"iterates are not monotone at sweep {it}")
        change = max(float(np.max(np.abs(up_new - up))), float(np.max(np.abs(lo_new - lo))))
        up, lo = up_new, lo_new
        gaps.append(float(np.max(up - lo)))
        if gaps[-1] <= tol * (1 + np.max(np.abs(up))) and change <= tol * (1 + np.max(np.abs(up))):
            converged = True
            break
    if up_end is None:
        up_end, lo_end = sweep(up)[1], sweep(lo)[1]
    return MonotoneResult(grid, nodes, up, lo, up_end, lo_end, gaps, it, converged)


# Duhamel residual -------------------------------------------------------------


def _simpson_vec(f, a, b, fa, fm, fb, whole, tol, depth, counter):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    delta = left + right - whole
    counter[0] += 2
    if np.max(np.abs(delta)) <= 15 * tol:
        return left + right + delta / 15
    if depth <= 0:
        raise ValueError("sample grid too coarse for the requested quadrature tolerance")
    return (_simpson_vec(f, a, m, fa, flm, fm, left, tol / 2, depth - 1, counter)
            + _simpson_vec(f, m, b, fm, frm, fb, right, tol / 2, depth - 1, counter))


def duhamel_residual(
    g: WeightedGraph,
    traj: EvolutionResult,
    lambda_psi,
    p: float | None = None,
    quad_tol: float = 1e-12,
    max_depth: int = 30,
) -> float:
    """Largest mismatch between the trajectory and its variation-of-constants replay.

    At each sample time ``t`` compares ``u(t)`` with
    ``sum_y P(t,x,y) lambda_psi(y) mu(y) + int_0^t sum_y P(t-s,x,y) u(s,y)^p mu(y) ds``.
    The time integral runs step by step over the stored dense output with
    adaptive Simpson and is carried forward with the exact semigroup.
    """
    if traj.blew_up:
        raise ValueError("the Duhamel replay needs a trajectory without blow-up")
    if traj.steps is None:
        raise ValueError("integrate with dense=True to replay the Duhamel formula")
    p = traj.p if p is None else p
    u0 = _as_values(g, lambda_psi)
    sg = HeatSemigroup(g, pinned=traj.pinned)
    evals = sg.evals
    c0 = sg.to_modes(u0)
    acc = np.zeros_like(c0)
    t_prev = 0.0
    sample_t = {round(t, 14): u for t, u in traj.samples}
    worst = 0.0
    u_start = u0.copy()
    u_start[traj.pinned] = 0.0
    worst = float(np.max(np.abs(traj.samples[0][1].values - u_start)))
    counter = [0]
    for st in traj.steps:
        a, b = st.t0, st.t0 + st.h

        def integrand(s, b=b, st=st):
            return np.exp(evals * (b - s)) * sg.to_modes(np.maximum(st.at(s), 0.0) ** p)

        fa, fm, fb = integrand(a), integrand(0.5 * (a + b)), integrand(b)
        whole = (b - a) / 6 * (fa + 4 * fm + fb)
        J = _simpson_vec(integrand, a, b, fa, fm, fb, whole, quad_tol, max_depth, counter)
        acc = np.exp(evals * (b - a)) * acc + J
        t_prev = b
        key = round(b, 14)
        if key in sample_t:
            pred = sg.from_modes(np.exp(evals * t_prev) * c0 + acc)
            worst = max(worst, float(np.max(np.abs(pred - sample_t[key].values))))
    return worst


# comparison principle -------------------------------------------------------------


@dataclass
class ComparisonReport:
    ordered: bool
    max_violation: float
    tol: float
    times: list

    def to_dict(self) -> dict:
        return {"ordered": self.ordered, "max_violation": self.max_violation, "tol": self.tol,
                "n_samples": len(self.times)}


def comparison_check(
    g: WeightedGraph,
    u0,
    v0,
    p: float,
    T_window: float,
    tol: float = 1e-8,
    n_samples: int = 21,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    boundary="none",
) -> ComparisonReport:
    """Integrate two ordered data and report the worst ``u - v`` over the samples."""
    a = _as_values(g, u0)
    b = _as_values(g, v0)
    if (a > b).any():
        raise ValueError("need u0 <= v0")
    ts = np.linspace(0.0, T_window, n_samples)
    ru = integrate(g, a, p, T_max=T_window, rtol=rtol, atol=atol, t_eval=ts, boundary=boundary)
    rv = integrate(g, b, p, T_max=T_window, rtol=rtol, atol=atol, t_eval=ts, boundary=boundary)
    if ru.blew_up or rv.blew_up:
        raise ValueError("T_window reaches a blow-up time")
    worst = -math.inf
    for (t, u), (_, v) in zip(ru.samples, rv.samples):
        worst = max(worst, float(np.max(u.values - v.values)))
    return ComparisonReport(worst <= tol, worst, tol, [t for t, _ in ru.samples])
