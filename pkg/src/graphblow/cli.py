"""Command line: ``graphblow <subcommand> ...``.

Exit codes: 0 success, 1 a check or assertion failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bounds import asymptotic_sweep, compute_bounds
from .evolution import LifespanConvergenceError, estimate_lifespan, integrate
from .experiments import (
    DEFAULT_SEED,
    PRESETS,
    ExperimentConfig,
    config_hash,
    csv_text,
    emit_plotdata,
    json_text,
    make_psi,
    run_scenario,
)
from .graph import (
    DomainSubset,
    GraphFamily,
    TruncationError,
    ball,
    build_graph,
    graph_constants,
    volume,
    volume_growth_fit,
)
from .heat_kernel import heat_kernel, kernel_audit
from .operators import cde_check
from .spectral import dirichlet_ground_state, ec_witness_search, ghost_vertex_lambda1


class UsageError(Exception):
    pass


def _finite(g, what="this command"):
    if isinstance(g, GraphFamily):
        raise UsageError(f"{what} needs a finite graph (add a radius, e.g. lattice:1:20)")
    return g


def _emit(args, name: str, payload: dict, csv_cols=None, csv_rows=None) -> None:
    text = json_text(payload)
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{name}.json").write_text(text)
        if csv_cols is not None:
            (d / f"{name}.csv").write_text(csv_text(csv_cols, csv_rows, payload.get("config_hash", "")))
    sys.stdout.write(text)


def _resolved(args, keys) -> dict:
    cfg = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    cfg["command"] = args.command
    return cfg


def _fill_from_config(args) -> None:
    if not args.config:
        return
    cfg = ExperimentConfig.from_file(args.config).raw
    mapping = {"graph": "graph", "psi": "psi", "p": "p", "lambda": "lam",
               "lambda_grid": "lambdas", "direction": "direction"}
    for key, attr in mapping.items():
        if key in cfg and getattr(args, attr, None) is None and hasattr(args, attr):
            setattr(args, attr, cfg[key])
    solver = cfg.get("solver", {})
    for key, attr in (("tol", "tol"), ("T_max", "T_max"), ("radius_schedule", "radius_schedule")):
        if key in solver and hasattr(args, attr) and getattr(args, attr, None) is None:
            setattr(args, attr, solver[key])
    if "seed" in cfg and args.seed is None:
        args.seed = cfg["seed"]


_FLAG_NAMES = {"lam": "lambda"}


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ("--" + _FLAG_NAMES.get(m, m).replace("_", "-") for m in missing)
        raise UsageError("missing required option(s): " + ", ".join(flags))


# subcommands -----------------------------------------------------------------------


def cmd_graph(args) -> int:
    _require(args, "graph")
    g = _finite(build_graph(args.graph))
    if args.action == "info":
        c = graph_constants(g)
        payload = {"graph": args.graph, "n_vertices": g.n, "n_edges": int(len(g.edges)),
                   "d_mu": c.d_mu, "d_omega": c.d_omega, "omega_min": c.omega_min,
                   "mu_max": c.mu_max, "mu_min": c.mu_min}
        _emit(args, "graph-info", payload)
        return 0
    center = args.center if args.center is not None else (g.center if g.center is not None else 0)
    if args.action == "ball":
        b = ball(g, center, args.radius)
        _emit(args, "graph-ball", {"center": g.ids[g.index(center)], "radius": args.radius,
                                   "vertices": [g.ids[i] for i in b], "volume": volume(g, b)})
        return 0
    rep = volume_growth_fit(g, center, args.r_max)
    payload = {"m_hat": rep.m_hat, "c0_hat": rep.c0_hat, "r_squared": rep.r_squared,
               "polynomial_flag": rep.polynomial_flag, "table": rep.table()}
    _emit(args, "graph-vgfit", payload, ["r", "volume"], rep.table())
    return 0


def cmd_spectrum(args) -> int:
    _require(args, "graph")
    g = _finite(build_graph(args.graph))
    if args.ec:
        eps, delta = args.ec
        om = ec_witness_search(g, args.x_tilde or (g.center if g.center is not None else 0), eps, delta)
        if om is None:
            _emit(args, "spectrum", {"witness": None})
            return 1
        gs = dirichlet_ground_state(g, om)
        _emit(args, "spectrum", {"witness": gs.to_dict(g)})
        return 0
    if args.ghost is not None:
        gs = ghost_vertex_lambda1(g, args.ghost)
    else:
        inner = args.interior.split("|") if args.interior else list(g.ids)
        om = DomainSubset.from_interior(g, inner)
        gs = dirichlet_ground_state(g, om)
    _emit(args, "spectrum", gs.to_dict(g))
    return 0


def cmd_kernel(args) -> int:
    _require(args, "graph")
    g = _finite(build_graph(args.graph))
    times = args.t or [1.0]
    if args.audit:
        rep = kernel_audit(g, times)
        v = rep.violations()
        ok = all(v[k] <= 1e-10 for k in ("positivity", "symmetry", "mass", "semigroup")) and \
            v["cross_method"] <= 1e-9
        _emit(args, "kernel-audit", {"t_grid": times, "violations": v, "passed": ok,
                                     "min_entry": rep.min_entry})
        return 0 if ok else 1
    out = {}
    for t in times:
        K = heat_kernel(g, t, args.method)
        out[repr(t)] = {g.ids[i]: {g.ids[j]: float(K.entries[i, j]) for j in range(g.n)} for i in range(g.n)}
    _emit(args, "kernel", {"method": args.method, "kernel": out})
    return 0


def cmd_cde(args) -> int:
    _require(args, "graph", "vertex")
    g = _finite(build_graph(args.graph))
    f = None
    if args.f:
        f = make_psi(args.f)(g)
    res = cde_check(g, args.vertex, args.n, args.K, args.variant, args.mode, f=f,
                    budget=args.budget, seed=args.seed if args.seed is not None else DEFAULT_SEED)
    _emit(args, "cde", res.to_dict(g))
    return 0 if res.satisfied or args.mode == "falsify" else 1


def cmd_simulate(args) -> int:
    _require(args, "graph", "psi", "p", "lam")
    g = build_graph(args.graph)
    if isinstance(g, GraphFamily):
        raise UsageError("simulate needs a finite graph or truncation (e.g. lattice:1:30)")
    u0 = args.lam * make_psi(args.psi)(g)
    T_max = args.T_max if args.T_max is not None else 100.0
    t_eval = np.linspace(0.0, T_max, args.samples) if args.samples and np.isfinite(T_max) else None
    res = integrate(g, u0, args.p, T_max=T_max, boundary=args.boundary, t_eval=t_eval)
    cfg = _resolved(args, ["graph", "psi", "p", "lam", "T_max", "boundary"])
    h = config_hash(cfg)
    payload = {"config": cfg, "config_hash": h, "status": res.status, "t_end": res.t_end,
               "bracket": list(res.bracket) if res.bracket else None,
               "T_est": res.lifespan_estimate,
               "steps": {"accepted": res.stats.accepted, "rejected": res.stats.rejected,
                         "min_dt": res.stats.min_dt}}
    rows = [{"t": t, "vertex_id": v, "u": u} for t, v, u in res.to_rows(g)]
    _emit(args, "simulate", payload, ["t", "vertex_id", "u"], rows)
    return 0


def cmd_lifespan(args) -> int:
    _require(args, "graph", "psi", "p", "lam")
    g = build_graph(args.graph)
    cfg = _resolved(args, ["graph", "psi", "p", "lam", "tol", "radius_schedule", "T_max"])
    try:
        est = estimate_lifespan(g, make_psi(args.psi), args.lam, args.p,
                                tol=args.tol if args.tol is not None else 1e-6,
                                radius_schedule=args.radius_schedule,
                                T_max=args.T_max if args.T_max is not None else 100.0)
        code = 0
    except LifespanConvergenceError as exc:
        est, code = exc.estimate, 1
    rows = [{"radius": h["radius"], "T_estimate": h["T"]} for h in est.history]
    payload = {"kind": "lifespan", "config": cfg, "config_hash": config_hash(cfg),
               "estimate": est.to_dict(), "rows": rows}
    _emit(args, "lifespan", payload, ["radius", "T_estimate"], rows)
    return code


def cmd_bounds(args) -> int:
    _require(args, "graph", "psi", "p", "lam")
    g = build_graph(args.graph)
    which = [k for k in ("kaplan", "hk", "density", "sandwich", "threshold") if getattr(args, k)]
    if args.all or not which:
        which = ["kaplan", "hk", "density", "sandwich", "threshold"]
    rep = compute_bounds(g, make_psi(args.psi), args.lam, args.p, which, radius=args.radius,
                         beta=args.beta)
    cfg = _resolved(args, ["graph", "psi", "p", "lam"])
    payload = {"config": cfg, "config_hash": config_hash(cfg), "report": rep.to_dict()}
    _emit(args, "bounds", payload)
    return 0 if rep.consistent() else 1


def cmd_sweep(args) -> int:
    _require(args, "graph", "psi", "p", "lambdas")
    g = build_graph(args.graph)
    table = asymptotic_sweep(g, make_psi(args.psi), args.p, sorted(args.lambdas),
                             args.direction or "large", budget_s=args.budget,
                             radius_schedule=args.radius_schedule)
    cfg = _resolved(args, ["graph", "psi", "p", "lambdas", "direction"])
    payload = {"kind": "sweep", "config": cfg, "config_hash": config_hash(cfg), **table.to_dict()}
    _emit(args, "sweep", payload, ["lambda", "scaled_lifespan", "lower_bound", "upper_bound"], table.rows)
    return 0 if table.complete else 1


def cmd_scenario(args) -> int:
    if args.name not in PRESETS:
        raise UsageError(f"unknown scenario {args.name!r}; choose from {', '.join(sorted(PRESETS))}")
    outcome = run_scenario(args.name, args.out_dir, args.seed if args.seed is not None else DEFAULT_SEED)
    sys.stdout.write(json_text(outcome.report()))
    return 0 if outcome.passed else 1


def cmd_plotdata(args) -> int:
    try:
        text = emit_plotdata(args.artifact, args.output)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    if args.output is None:
        sys.stdout.write(text)
    return 0


# parser ---------------------------------------------------------------------------


def _common(sp, psi=True):
    sp.add_argument("--graph", help="graph descriptor, e.g. cycle:8, lattice:1:20, tree:2:5, file:g.json")
    if psi:
        sp.add_argument("--psi", help="initial data: const:c, indicator:ID|ID, shell:v0,v1, halfline, "
                                      "peak:ID:hi:lo, random:lo:hi:seed, file:PATH")
        sp.add_argument("--p", type=float, help="reaction exponent (> 1)")
        sp.add_argument("--lambda", dest="lam", type=float, help="scale of the initial data")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphblow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"graphblow {__version__}")
    ap.add_argument("--config", help="JSON experiment config; fills options not given on the line")
    ap.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")
    ap.add_argument("--out-dir", default=None, help="directory for JSON/CSV artifacts")
    ap.add_argument("--threads", type=int, default=None, help="cap on BLAS threads")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("graph", help="graph summaries")
    sp.add_argument("action", choices=["info", "ball", "vgfit"])
    _common(sp, psi=False)
    sp.add_argument("--center")
    sp.add_argument("--radius", type=int, default=1)
    sp.add_argument("--r-max", type=int, default=10)
    sp.set_defaults(func=cmd_graph)

    sp = sub.add_parser("spectrum", help="principal Dirichlet eigenpair")
    _common(sp, psi=False)
    sp.add_argument("--interior", help="interior vertex ids separated by |")
    sp.add_argument("--ghost", help="attach a ghost vertex here and solve on the whole graph")
    sp.add_argument("--ec", nargs=2, type=float, metavar=("EPS", "DELTA"), help="search a far small-eigenvalue witness")
    sp.add_argument("--x-tilde")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("kernel", help="heat kernel and its audit")
    _common(sp, psi=False)
    sp.add_argument("--t", type=float, nargs="+")
    sp.add_argument("--method", choices=["expm", "series"], default="expm")
    sp.add_argument("--audit", action="store_true")
    sp.set_defaults(func=cmd_kernel)

    sp = sub.add_parser("cde", help="curvature-dimension check at a vertex")
    _common(sp, psi=False)
    sp.add_argument("--vertex")
    sp.add_argument("--n", type=float, default=2.0)
    sp.add_argument("--K", type=float, default=0.0)
    sp.add_argument("--variant", choices=["CDE", "CDE'"], default="CDE'")
    sp.add_argument("--mode", choices=["verify", "falsify"], default="verify")
    sp.add_argument("--f", help="test function descriptor (same forms as --psi)")
    sp.add_argument("--budget", type=int, default=10_000)
    sp.set_defaults(func=cmd_cde)

    sp = sub.add_parser("simulate", help="integrate one trajectory")
    _common(sp)
    sp.add_argument("--T-max", dest="T_max", type=float)
    sp.add_argument("--samples", type=int, default=11)
    sp.add_argument("--boundary", choices=["none", "dirichlet"], default="none")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("lifespan", help="lifespan estimate with truncation history")
    _common(sp)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--T-max", dest="T_max", type=float)
    sp.add_argument("--radius-schedule", type=int, nargs="+")
    sp.set_defaults(func=cmd_lifespan)

    sp = sub.add_parser("bounds", help="analytic lifespan bounds")
    _common(sp)
    for flag in ("all", "kaplan", "hk", "density", "sandwich", "threshold"):
        sp.add_argument(f"--{flag}", action="store_true")
    sp.add_argument("--radius", type=int, help="truncation radius for infinite families")
    sp.add_argument("--beta", type=float)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("sweep", help="scaled lifespans across lambda")
    _common(sp)
    sp.add_argument("--lambdas", type=float, nargs="+")
    sp.add_argument("--direction", choices=["large", "small"])
    sp.add_argument("--budget", type=float, help="time budget in seconds")
    sp.add_argument("--radius-schedule", type=int, nargs="+")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("scenario", help="run a preset with embedded checks")
    sp.add_argument("name", help="one of: " + ", ".join(sorted(PRESETS)))
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("plotdata", help="tidy CSV from a run artifact")
    sp.add_argument("artifact")
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        _fill_from_config(args)
        with threadpool_limits(args.threads):
            return args.func(args)
    except UsageError as exc:
        print(f"graphblow: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError, TruncationError, jsonschema.ValidationError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"graphblow: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
