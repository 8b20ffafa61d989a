"""Analytic lifespan bounds and the checks that tie them to simulated lifespans."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .evolution import estimate_lifespan, resolve_psi
from .graph import (
    DomainSubset,
    GraphFamily,
    TruncationError,
    VertexRef,
    WeightedGraph,
    ball,
    graph_constants,
)
from .heat_kernel import HeatSemigroup
from .spectral import dirichlet_ground_state, ghost_vertex_lambda1


def _check_p(p: float) -> None:
    if not p > 1:
        raise ValueError("p must exceed 1")


def lower_bound_basic(lam: float, psi_sup: float, p: float) -> float:
    """``(lam * psi_sup)^{1-p} / (p-1)``: no solution with this data dies earlier."""
    _check_p(p)
    if lam <= 0 or psi_sup <= 0:
        raise ValueError("lambda and sup psi must be positive")
    return (lam * psi_sup) ** (1 - p) / (p - 1)


# eigenfunction method ----------------------------------------------------------


@dataclass
class KaplanResult:
    """Outcome of the ground-state projection on one subset."""

    threshold_met: bool
    T_up: float | None
    eta0: float
    lambda1: float
    interior: list
    lam: float
    p: float

    def to_dict(self) -> dict:
        return asdict(self)


def kaplan_upper(lambda1: float, eta0: float, p: float) -> float | None:
    """``-ln(1 - lambda1/eta0^{p-1}) / (lambda1 (p-1))``, or None below the threshold.

    ``lambda1 = 0`` gives the limiting value ``1 / ((p-1) eta0^{p-1})``.
    """
    if eta0 <= 0:
        return None
    ep = eta0 ** (p - 1)
    if lambda1 == 0:
        return 1.0 / ((p - 1) * ep)
    if not ep > lambda1:
        return None
    return -math.log1p(-lambda1 / ep) / (lambda1 * (p - 1))


def kaplan_bound(g: WeightedGraph, om: DomainSubset, lam: float, psi, p: float) -> KaplanResult:
    """Upper bound from projecting onto the positive Dirichlet ground state of ``om``.

    With ``eta0 = lam * sum_Omega psi phi mu`` the solution blows up by
    ``T_up`` whenever ``eta0^{p-1} > lambda1``; otherwise no bound is returned.
    """
    _check_p(p)
    psi = resolve_psi(g, psi)
    gs = dirichlet_ground_state(g, om)
    integral = float(np.dot(psi * g.mu, gs.phi))
    if integral <= 0:
        raise ValueError("psi vanishes on the interior of the subset")
    eta0 = lam * integral
    T_up = kaplan_upper(gs.lambda1, eta0, p)
    return KaplanResult(T_up is not None, T_up, eta0, gs.lambda1,
                        [g.ids[i] for i in om.interior], lam, p)


def _interior_ok(g: WeightedGraph, verts: np.ndarray) -> bool:
    """The closure of ``verts`` lies in ``g`` with every neighbour present."""
    if not g.is_truncation:
        return True
    return bool((g.distances_from(g.center)[verts] < g.truncation_radius).all())


def kaplan_bound_auto(
    g: WeightedGraph, lam: float, psi, p: float, r_cap: int = 3
) -> KaplanResult | None:
    """Best eigenfunction bound over singletons in ``supp psi`` and balls around ``argmax psi``.

    On a finite graph the whole vertex set (no boundary, ``lambda1 = 0``) is
    a candidate as well.  Returns None when no candidate meets its threshold.
    """
    _check_p(p)
    psi = resolve_psi(g, psi)
    best: KaplanResult | None = None
    # singletons in closed form: phi = 1/mu, lambda1 = m/mu
    supp = np.flatnonzero(psi > 0)
    supp = np.array([x for x in supp if _interior_ok(g, np.array([x]))], dtype=np.int64)
    if supp.size:
        lam1 = g.m[supp] / g.mu[supp]
        eta = lam * psi[supp]
        vals = np.array([kaplan_upper(a, e, p) or math.inf for a, e in zip(lam1, eta)])
        k = int(np.argmin(vals))
        if np.isfinite(vals[k]):
            x = int(supp[k])
            best = KaplanResult(True, float(vals[k]), float(eta[k]), float(lam1[k]), [g.ids[x]], lam, p)
    candidates = []
    if supp.size or psi.max() > 0:
        centre = int(np.argmax(psi))
        for r in range(1, r_cap + 1):
            verts = ball(g, centre, r)
            if _interior_ok(g, verts):
                candidates.append(verts)
    if not g.is_truncation:
        candidates.append(np.arange(g.n))
    seen = set()
    for verts in candidates:
        key = tuple(verts.tolist())
        if key in seen:
            continue
        seen.add(key)
        res = kaplan_bound(g, DomainSubset.from_interior(g, verts), lam, psi, p)
        if res.threshold_met and (best is None or res.T_up < best.T_up):
            best = res
    return best


# heat kernel method ---------------------------------------------------------------


@dataclass
class HeatKernelBound:
    x_bar: str
    T_up: float | None
    t_max: float
    radius: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def heat_kernel_margin(d_mu: float, t: float) -> int:
    """Hops kept between the probe vertex and the truncation cut."""
    return int(math.ceil(2 + 2 * math.sqrt(d_mu * t)))


def heat_kernel_upper_bound(
    target,
    x_bar: VertexRef,
    lam: float,
    psi,
    p: float,
    t_max: float,
    radius: int | None = None,
    grid: int = 2000,
) -> HeatKernelBound:
    """First root of ``(p-1) t - (lam F(t))^{1-p}``, ``F(t) = sum_y P(t, x_bar, y) psi(y) mu(y)``.

    Below the lifespan this expression is nonpositive, so its first root on
    ``(0, t_max]`` bounds the lifespan from above.  For a :class:`GraphFamily`
    the kernel of the Dirichlet truncation at ``radius`` is used; it is
    dominated by the full kernel, which can only push the root later.
    """
    _check_p(p)
    if isinstance(target, GraphFamily):
        if radius is None:
            raise ValueError("a truncation radius is needed for an infinite family")
        g = target.truncate(radius)
    else:
        g = target
    xb = g.index(x_bar)
    psi_v = resolve_psi(g, psi)
    if (psi_v < 0).any() or not (psi_v > 0).any():
        raise ValueError("psi must be nonnegative and not identically zero")
    pinned = None
    if g.is_truncation:
        d_mu = graph_constants(g).d_mu
        if g.depth(xb) > g.truncation_radius - heat_kernel_margin(d_mu, t_max):
            raise TruncationError("truncation margin insufficient for t_max")
        pinned = g.sphere()
    sg = HeatSemigroup(g, pinned=pinned)

    def gfun(t: float) -> float:
        F = float(sg.apply(t, psi_v)[xb]) if t > 0 else float(psi_v[xb])
        if F <= 0:
            return -math.inf
        return (p - 1) * t - (lam * F) ** (1 - p)

    ts = np.linspace(0.0, t_max, grid + 1)[1:]
    prev_t, prev_v = 0.0, gfun(0.0)
    for t in ts:
        v = gfun(t)
        if v >= 0:
            if v == 0:
                return HeatKernelBound(g.ids[xb], float(t), t_max, radius)
            a = prev_t if np.isfinite(prev_v) else 0.5 * (prev_t + t)
            while not np.isfinite(gfun(a)):
                a = 0.5 * (a + t)
            root = brentq(gfun, a, t, xtol=1e-15, rtol=1e-14)
            return HeatKernelBound(g.ids[xb], float(root), t_max, radius)
        prev_t, prev_v = t, v
    return HeatKernelBound(g.ids[xb], None, t_max, radius)


# density method -------------------------------------------------------------------


@dataclass
class DensityProfile:
    """Sliding-ball density of ``{psi >= beta}`` over a grid of radii."""

    beta: float
    per_radius: list
    D_bar_estimate: float
    estimator_note: str

    def to_dict(self) -> dict:
        return asdict(self)


def density_profile(
    target,
    psi,
    beta: float,
    r_grid: Sequence[int],
    window: int | None = None,
) -> DensityProfile:
    """``D(beta; r) = max_x |B(x, r) ∩ {psi >= beta}| / |B(x, r)|`` with unit vertex weights.

    Centres range over a window of ``window`` hops (default ``max(r_grid)``)
    around the origin of a lattice truncation whose radius leaves every
    ball whole.  The limsup estimate is the largest value over the upper
    half of ``r_grid``; no extrapolation beyond the observed radii.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    r_grid = sorted(int(r) for r in r_grid)
    if not r_grid or r_grid[0] < 0:
        raise ValueError("r_grid must hold nonnegative radii")
    window = max(r_grid) if window is None else int(window)
    if isinstance(target, GraphFamily):
        if target.kind != "lattice":
            raise ValueError("density profiles are defined on lattices")
        g = target.truncate(window + max(r_grid))
    else:
        g = target
        if not g.is_truncation:
            raise ValueError("need a lattice truncation with a center")
        if window + max(r_grid) > g.truncation_radius:
            raise TruncationError("radius grid reaches outside the truncation")
    hit = resolve_psi(g, psi) >= beta
    centres = np.flatnonzero(g.distances_from(g.center) <= window)
    rows = []
    for r in r_grid:
        best = 0.0
        for x in centres:
            b = ball(g, int(x), r)
            best = max(best, float(hit[b].sum()) / b.size)
            if best == 1.0:
                break
        rows.append((r, best))
    tail = [d for r, d in rows[len(rows) // 2:]]
    D_bar = max(tail)
    trend = "nondecreasing" if all(b >= a for a, b in zip(tail, tail[1:])) else (
        "nonincreasing" if all(b <= a for a, b in zip(tail, tail[1:])) else "mixed")
    note = (f"max over the upper half of the radius grid ({len(tail)} radii, trend {trend}); "
            "a finite-radius estimate of the limsup, not the limit itself")
    return DensityProfile(float(beta), rows, float(D_bar), note)


def density_bound(profile: DensityProfile, p: float) -> float | None:
    """``(beta * D_bar)^{1-p} / (p-1)``, or None when the estimated density vanishes."""
    _check_p(p)
    if profile.D_bar_estimate <= 0:
        return None
    return (profile.beta * profile.D_bar_estimate) ** (1 - p) / (p - 1)


# finite graphs ------------------------------------------------------------------


@dataclass
class FiniteThreshold:
    Lambda1: float
    lambda1: float
    integral: float
    x_tilde: str
    p: float

    def to_dict(self) -> dict:
        return asdict(self)


def finite_graph_threshold(g: WeightedGraph, x_tilde: VertexRef, psi, p: float) -> FiniteThreshold:
    """Scale above which blow-up is certain, from the ghost-vertex ground state at ``x_tilde``.

    ``Lambda1 = lambda1^{1/(p-1)} / sum_V psi phi mu``.
    """
    _check_p(p)
    psi = resolve_psi(g, psi)
    if not (psi > 0).any():
        raise ValueError("psi vanishes identically")
    gs = ghost_vertex_lambda1(g, x_tilde)
    integral = float(np.dot(psi * g.mu, gs.phi))
    Lam = gs.lambda1 ** (1 / (p - 1)) / integral
    return FiniteThreshold(float(Lam), gs.lambda1, integral, g.ids[g.index(x_tilde)], p)


@dataclass(frozen=True)
class Sandwich:
    """Lifespan bracket from the spatially constant comparison solutions at ``max psi`` and ``min psi``."""

    psi_max: float
    psi_min: float
    p: float

    def t1(self, lam: float) -> float:
        return 1.0 / ((self.p - 1) * (lam * self.psi_max) ** (self.p - 1))

    def t2(self, lam: float) -> float:
        return 1.0 / ((self.p - 1) * (lam * self.psi_min) ** (self.p - 1))

    def to_dict(self, lam: float) -> dict:
        return {"t1": self.t1(lam), "t2": self.t2(lam)}


def sandwich_finite(psi, p: float) -> Sandwich:
    """Bracket ``t1 <= T <= t2`` for data ``lam * psi`` on a finite graph; needs ``min psi > 0``."""
    _check_p(p)
    psi = np.asarray(psi, dtype=float)
    if psi.min() <= 0:
        raise ValueError("min psi must be positive")
    return Sandwich(float(psi.max()), float(psi.min()), float(p))


# reports ----------------------------------------------------------------------------


@dataclass
class BoundsReport:
    """Every applicable bound for one ``(graph, psi, lambda, p)``, with its inputs."""

    lam: float
    p: float
    psi_sup: float
    lower_basic: float
    kaplan: dict | None = None
    heat_kernel_bound: dict | None = None
    density_bound: dict | None = None
    finite_threshold: dict | None = None
    sandwich: dict | None = None

    def upper_bounds(self) -> dict:
        out = {}
        if self.kaplan and self.kaplan.get("T_up") is not None:
            out["kaplan"] = self.kaplan["T_up"]
        if self.heat_kernel_bound and self.heat_kernel_bound.get("T_up") is not None:
            out["heat_kernel"] = self.heat_kernel_bound["T_up"]
        if self.density_bound and self.density_bound.get("T_up") is not None:
            out["density"] = self.density_bound["T_up"]
        if self.sandwich:
            out["sandwich_t2"] = self.sandwich["t2"]
        return out

    def consistent(self, slack: float = 1e-9) -> bool:
        """Every upper bound sits at or above the basic lower bound."""
        return all(v >= self.lower_basic * (1 - slack) for v in self.upper_bounds().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["consistent"] = self.consistent()
        return d


def compute_bounds(
    target,
    psi,
    lam: float,
    p: float,
    which: Sequence[str] = ("kaplan", "hk", "density", "sandwich", "threshold"),
    x_bar: VertexRef | None = None,
    t_max: float | None = None,
    radius: int | None = None,
    beta: float | None = None,
    r_grid: Sequence[int] | None = None,
) -> BoundsReport:
    """Assemble a :class:`BoundsReport`; bounds whose preconditions fail are left empty."""
    _check_p(p)
    which = set(which)
    if isinstance(target, GraphFamily):
        g = target.truncate(radius or 32)
    else:
        g = target
    psi_v = resolve_psi(g, psi)
    sup = float(psi_v.max())
    rep = BoundsReport(lam, p, sup, lower_bound_basic(lam, sup, p))
    finite = not g.is_truncation
    xb = int(np.argmax(psi_v)) if x_bar is None else g.index(x_bar)
    if "kaplan" in which:
        res = kaplan_bound_auto(g, lam, psi_v, p)
        if res is not None:
            rep.kaplan = res.to_dict()
    if "hk" in which:
        t_max_hk = t_max if t_max is not None else 4.0 * rep.lower_basic * max(1.0, (sup / max(
            psi_v[xb], 1e-300)) ** (p - 1))
        try:
            hk = heat_kernel_upper_bound(g, xb, lam, psi_v, p, t_max_hk)
            rep.heat_kernel_bound = hk.to_dict()
        except TruncationError:
            rep.heat_kernel_bound = None
    if "density" in which and isinstance(target, GraphFamily) and target.kind == "lattice":
        b = sup if beta is None else beta
        prof = density_profile(target, psi, b, r_grid or [1, 2, 4, 8, 16])
        rep.density_bound = {"beta": b, "D_bar": prof.D_bar_estimate,
                             "T_up": density_bound(prof, p), "note": prof.estimator_note}
    if finite and "sandwich" in which and psi_v.min() > 0:
        rep.sandwich = sandwich_finite(psi_v, p).to_dict(lam)
    if finite and "threshold" in which and g.n > 0:
        rep.finite_threshold = finite_graph_threshold(g, xb, psi_v, p).to_dict()
    return rep


# asymptotic sweeps -----------------------------------------------------------------------


@dataclass
class SweepTable:
    rows: list
    direction: str
    limit: float | None
    monotone: bool
    complete: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def asymptotic_sweep(
    target,
    psi,
    p: float,
    lambda_grid: Sequence[float],
    direction: str = "large",
    budget_s: float | None = None,
    tol: float = 1e-6,
    radius_schedule: Sequence[int] | None = None,
) -> SweepTable:
    """Tabulate ``lam^{p-1} T_lam`` across ``lambda_grid`` next to every applicable bound.

    ``direction="large"`` compares with the limit ``1 / ((p-1) sup psi^{p-1})``;
    ``"small"`` on a finite graph with positive data reports the sandwich
    limits.  Rows stop early, and the table is marked incomplete, once
    ``budget_s`` seconds are spent.
    """
    _check_p(p)
    if direction not in ("large", "small"):
        raise ValueError("direction must be 'large' or 'small'")
    grid = [float(x) for x in lambda_grid]
    if grid != sorted(grid):
        raise ValueError("lambda_grid must be sorted")
    probe = target.truncate(8) if isinstance(target, GraphFamily) else target
    psi_probe = resolve_psi(probe, psi)
    sup = float(psi_probe.max())
    finite = isinstance(target, WeightedGraph) and not target.is_truncation
    sandwich = sandwich_finite(psi_probe, p) if finite and psi_probe.min() > 0 else None
    limit = None
    if direction == "large":
        limit = 1.0 / ((p - 1) * sup ** (p - 1))
    start = time.perf_counter()
    rows = []
    complete = True
    for lam in grid:
        if budget_s is not None and time.perf_counter() - start > budget_s:
            complete = False
            break
        low = lower_bound_basic(lam, sup, p)
        T_max = 2.0 * sandwich.t2(lam) + 1.0 if sandwich else 1e3 * low
        est = estimate_lifespan(target, psi, lam, p, tol=tol, radius_schedule=radius_schedule,
                                T_max=T_max)
        scale = lam ** (p - 1)
        row = {
            "lambda": lam,
            "T_est": est.T_est,
            "T_lo": est.bracket[0],
            "T_hi": est.bracket[1],
            "scaled_lifespan": scale * est.T_est,
            "lower_bound": scale * low,
        }
        if finite:
            kap = kaplan_bound_auto(target, lam, psi, p)
            row["kaplan_upper"] = scale * kap.T_up if kap else None
        if sandwich:
            row["t1_scaled"] = scale * sandwich.t1(lam)
            row["t2_scaled"] = scale * sandwich.t2(lam)
        ups = [v for k, v in row.items() if k in ("kaplan_upper", "t2_scaled") and v is not None]
        row["upper_bound"] = min(ups) if ups else None
        rows.append(row)
    vals = [r["scaled_lifespan"] for r in rows]
    if direction == "large":
        monotone = all(b < a for a, b in zip(vals, vals[1:]))
    else:
        # lambda grid ascending, so the approach to lambda -> 0 reads right to left
        monotone = all(b >= a for a, b in zip(vals, vals[1:])) or all(b <= a for a, b in zip(vals, vals[1:]))
    note = "" if complete else "time budget exhausted; partial table"
    if direction == "small" and sandwich:
        note = (note + "; " if note else "") + (
            f"sandwich limits [{1 / ((p - 1) * sandwich.psi_max ** (p - 1)):.6g}, "
            f"{1 / ((p - 1) * sandwich.psi_min ** (p - 1)):.6g}]")
    return SweepTable(rows, direction, limit, monotone, complete, note)


__all__ = [
    "BoundsReport",
    "DensityProfile",
    "FiniteThreshold",
    "HeatKernelBound",
    "KaplanResult",
    "Sandwich",
    "SweepTable",
    "asymptotic_sweep",
    "compute_bounds",
    "density_bound",
    "density_profile",
    "finite_graph_threshold",
    "heat_kernel_upper_bound",
    "kaplan_bound",
    "kaplan_bound_auto",
    "kaplan_upper",
    "lower_bound_basic",
    "sandwich_finite",
]
