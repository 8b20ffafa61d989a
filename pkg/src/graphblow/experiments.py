"""Experiment configs, initial-data descriptors, scenario presets and tidy plot data."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from .bounds import (
    asymptotic_sweep,
    density_bound,
    density_profile,
    lower_bound_basic,
    sandwich_finite,
)
from .evolution import estimate_lifespan, integrate
from .graph import GraphFamily, WeightedGraph, build_graph, lattice_ball, random_connected_graph, tree_ball, volume_growth_fit
from .operators import cde_check
from .spectral import dirichlet_ground_state, ec_witness_search

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "graphblow experiment",
    "type": "object",
    "required": ["graph", "psi", "p"],
    "additionalProperties": False,
    "properties": {
        "graph": {"type": "string", "minLength": 1},
        "psi": {"type": "string", "minLength": 1},
        "p": {"type": "number", "exclusiveMinimum": 1},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "lambda_grid": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0},
        },
        "direction": {"enum": ["large", "small"]},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "T_max": {"type": "number", "exclusiveMinimum": 0},
                "lifespan_tol": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "radius_schedule": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 1},
                },
            },
        },
        "bounds": {
            "type": "array",
            "items": {"enum": ["kaplan", "hk", "density", "sandwich", "threshold"]},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULT_SEED = 20240601


@dataclass
class ExperimentConfig:
    """A validated experiment description; ``raw`` is exactly what was validated."""

    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        jsonschema.validate(data, CONFIG_SCHEMA)
        return cls(json.loads(json.dumps(data)))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def solver(self, key, default=None):
        return self.raw.get("solver", {}).get(key, default)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(data) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


# initial data -------------------------------------------------------------------


def make_psi(desc: str) -> Callable[[WeightedGraph], np.ndarray]:
    """Initial-data rule from a descriptor.

    ``const:c``; ``indicator:ID|ID[:value]``; ``shell:v0,v1,...`` (value by
    hop distance from the center, last value repeated); ``halfline[:c]``
    (``c`` where the first lattice coordinate is >= 0); ``peak:ID:high:low``;
    ``random:lo:hi[:seed]`` (uniform per vertex); ``file:PATH`` (JSON
    mapping id -> value, absent ids are 0).
    """
    kind, _, rest = desc.partition(":")
    args = rest.split(":") if rest else []
    if kind == "const":
        c = float(args[0]) if args else 1.0
        return lambda g: np.full(g.n, c)
    if kind == "indicator":
        ids = args[0].split("|")
        val = float(args[1]) if len(args) > 1 else 1.0

        def rule(g):
            v = np.zeros(g.n)
            v[[g.index(x) for x in ids]] = val
            return v

        return rule
    if kind == "shell":
        levels = [float(x) for x in args[0].split(",")]

        def rule(g):
            src = g.center if g.center is not None else 0
            d = np.minimum(g.distances_from(src), len(levels) - 1)
            return np.asarray(levels)[d]

        return rule
    if kind == "halfline":
        c = float(args[0]) if args else 1.0

        def rule(g):
            if g.coords is None:
                raise ValueError("halfline data needs lattice coordinates")
            return np.where(np.asarray(g.coords)[:, 0] >= 0, c, 0.0)

        return rule
    if kind == "peak":
        vid, hi, lo = args[0], float(args[1]), float(args[2])

        def rule(g):
            v = np.full(g.n, lo)
            v[g.index(vid)] = hi
            return v

        return rule
    if kind == "random":
        lo, hi = float(args[0]), float(args[1])
        seed = int(args[2]) if len(args) > 2 else DEFAULT_SEED
        return lambda g: np.random.default_rng(seed).uniform(lo, hi, g.n)
    if kind == "file":
        mapping = json.loads(Path(rest).read_text())

        def rule(g):
            v = np.zeros(g.n)
            for k, val in mapping.items():
                v[g.index(k)] = float(val)
            return v

        return rule
    raise ValueError(f"unknown initial-data descriptor {desc!r}")


# output -------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def csv_text(columns: list[str], rows: list, cfg_hash: str) -> str:
    """CSV with a comment header carrying the library version and config hash."""
    buf = io.StringIO()
    buf.write(f"# graphblow {__version__} config_hash={cfg_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c) if isinstance(r, dict) else r[i]) for i, c in enumerate(columns)])
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[dict]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rd = csv.DictReader(lines)
    return list(rd.fieldnames or []), list(rd)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def json_text(data: dict) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(json.loads(json.dumps(data, default=_json_default))), indent=2,
                      sort_keys=True) + "\n"


@dataclass
class ScenarioOutcome:
    name: str
    checks: list = field(default_factory=list)  # (name, passed, detail)
    artifacts: dict = field(default_factory=dict)  # file name -> text

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append((name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def report(self) -> dict:
        return {
            "scenario": self.name,
            "passed": self.passed,
            "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in self.checks],
        }


# presets ---------------------------------------------------------------------------


def _single_vertex_exact(seed: int) -> ScenarioOutcome:
    cfg = {"graph": "single", "psi": "const:1", "p": 2.0, "lambda": 1.0}
    out = ScenarioOutcome("single-vertex-exact")
    g = build_graph("single")
    rows = []
    for p, u0, exact in ((2.0, 1.0, 1.0), (3.0, 2.0, 1.0 / 8.0)):
        r = integrate(g, [u0], p)
        T = r.lifespan_estimate
        rows.append({"p": p, "u0": u0, "T_est": T, "T_exact": exact, "T_lo": r.bracket[0],
                     "T_hi": r.bracket[1]})
        out.check(f"|T - {exact:g}| <= 1e-6 (p={p:g}, u0={u0:g})", abs(T - exact) <= 1e-6,
                  f"T={T!r}")
        out.check(f"bracket, widened by the integration allowance, holds the exact value (p={p:g})",
                  r.bracket[0] - r.time_error <= exact <= r.bracket[1] + r.time_error,
                  f"bracket={r.bracket}, allowance={r.time_error!r}")
    h = config_hash(cfg)
    out.artifacts["single-vertex-exact.csv"] = csv_text(
        ["p", "u0", "T_est", "T_exact", "T_lo", "T_hi"], rows, h)
    out.artifacts["single-vertex-exact.json"] = json_text({"kind": "table", "config": cfg, "rows": rows})
    return out


def _random_graph_sandwich(seed: int) -> ScenarioOutcome:
    cfg = {"graph": f"random:12:{seed}", "psi": f"random:0.5:1.5:{seed}", "p": 2.0,
           "lambda_grid": [0.1, 0.3, 1.0, 3.0]}
    out = ScenarioOutcome("thm24-sandwich")
    g = random_connected_graph(12, seed)
    psi = make_psi(cfg["psi"])(g)
    sw = sandwich_finite(psi, 2.0)
    rows = []
    for lam in cfg["lambda_grid"]:
        est = estimate_lifespan(g, psi, lam, 2.0, T_max=2 * sw.t2(lam) + 1)
        t1, t2 = sw.t1(lam), sw.t2(lam)
        inside = t1 - 1e-8 <= est.bracket[0] and est.T_est <= t2 + 1e-8
        rows.append({"lambda": lam, "T_est": est.T_est, "t1": t1, "t2": t2, "inside": inside})
        out.check(f"t1 <= T <= t2 at lambda={lam:g}", inside, f"{t1!r} <= {est.T_est!r} <= {t2!r}")
    out.artifacts["thm24-sandwich.csv"] = csv_text(["lambda", "T_est", "t1", "t2", "inside"], rows,
                                                   config_hash(cfg))
    out.artifacts["thm24-sandwich.json"] = json_text({"kind": "table", "config": cfg, "rows": rows})
    return out


def _sweep_artifacts(out, name, cfg, table):
    rows = [{"lambda": r["lambda"], "scaled_lifespan": r["scaled_lifespan"],
             "lower_bound": r["lower_bound"], "upper_bound": r["upper_bound"]} for r in table.rows]
    out.artifacts[f"{name}.csv"] = csv_text(["lambda", "scaled_lifespan", "lower_bound", "upper_bound"],
                                            rows, config_hash(cfg))
    out.artifacts[f"{name}.json"] = json_text({"kind": "sweep", "config": cfg, "rows": table.rows,
                                               "limit": table.limit, "monotone": table.monotone,
                                               "complete": table.complete, "note": table.note})


def _large_scale_trend(seed: int) -> ScenarioOutcome:
    cfg = {"graph": "cycle:8", "psi": "peak:0:1:0.5", "p": 2.0, "lambda_grid": [10, 30, 100, 300],
           "direction": "large"}
    out = ScenarioOutcome("thm21-large-lambda")
    g = build_graph(cfg["graph"])
    table = asymptotic_sweep(g, make_psi(cfg["psi"]), 2.0, cfg["lambda_grid"], "large")
    vals = [r["scaled_lifespan"] for r in table.rows]
    out.check("lambda*T strictly decreasing", table.monotone, repr(vals))
    out.check("every lambda*T >= 1", all(v >= 1.0 for v in vals), repr(min(vals)))
    out.check("last lambda*T <= 1.15", vals[-1] <= 1.15, repr(vals[-1]))
    _sweep_artifacts(out, "thm21-large-lambda", cfg, table)
    return out


def _far_witness_line(seed: int) -> ScenarioOutcome:
    cfg = {"graph": "lattice:1", "psi": "const:1", "p": 2.0, "lambda": 1.0,
           "solver": {"radius_schedule": [8, 16, 32, 64]}}
    out = ScenarioOutcome("thm23-ec")
    z = lattice_ball(1, 40)
    eps, delta = 0.1, 5
    om = ec_witness_search(z, "0", eps, delta)
    out.check("witness found for eps=0.1, delta=5", om is not None)
    wit = {}
    if om is not None:
        gs = dirichlet_ground_state(z, om)
        dist = z.distances_from("0")
        wit = {"interior": [z.ids[i] for i in om.interior], "lambda1": gs.lambda1,
               "min_distance": int(dist[om.all].min())}
        out.check("lambda1(witness) < eps", gs.lambda1 < eps, repr(gs.lambda1))
        out.check("witness lies beyond delta", dist[om.all].min() > delta, str(wit["min_distance"]))
    fam = GraphFamily("lattice", 1)
    est = estimate_lifespan(fam, make_psi(cfg["psi"]), 1.0, 2.0,
                            radius_schedule=cfg["solver"]["radius_schedule"])
    Ts = [h["T"] for h in est.history]
    low = lower_bound_basic(1.0, 1.0, 2.0)
    out.check("T(R) nonincreasing in R", all(b <= a + 1e-12 for a, b in zip(Ts, Ts[1:])), repr(Ts))
    out.check("T >= lower bound", est.bracket[0] >= low - 1e-8, repr(est.bracket))
    out.check("truncation sequence converged", est.converged)
    rows = [{"radius": h["radius"], "T_estimate": h["T"]} for h in est.history]
    out.artifacts["thm23-ec-lifespan.csv"] = csv_text(["radius", "T_estimate"], rows, config_hash(cfg))
    out.artifacts["thm23-ec-lifespan.json"] = json_text(
        {"kind": "lifespan", "config": cfg, "rows": rows, "estimate": est.to_dict(), "witness": wit})
    return out


def _growth_and_curvature(seed: int) -> ScenarioOutcome:
    cfg = {"graph": "lattice:1", "psi": "const:1", "p": 2.0, "seed": seed}
    out = ScenarioOutcome("thm22-hypotheses")
    z1 = lattice_ball(1, 40)
    vg1 = volume_growth_fit(z1, "0", 30)
    out.check("Z^1 volume growth looks polynomial", vg1.polynomial_flag, f"R^2={vg1.r_squared!r}")
    out.check("Z^1 growth exponent near 1", 0.8 <= vg1.m_hat <= 1.2, repr(vg1.m_hat))
    tr = tree_ball(2, 10)
    vgt = volume_growth_fit(tr, tr.ids[0], 8)
    out.check("tree T_2 growth is not polynomial at R^2 >= 0.99", not vgt.polynomial_flag,
              f"R^2={vgt.r_squared!r}")
    res = cde_check(z1, "0", 0.01, 0.0, "CDE'", "falsify", budget=2000, seed=seed)
    out.check("CDE'(0.01, 0) on Z^1 has a counterexample", not res.satisfied, repr(res.margin))
    rows = [{"r": r["r"], "volume": r["volume"]} for r in vg1.table()]
    out.artifacts["thm22-hypotheses-vg.csv"] = csv_text(["r", "volume"], rows, config_hash(cfg))
    out.artifacts["thm22-hypotheses.json"] = json_text({
        "kind": "table", "config": cfg, "rows": rows,
        "vg_z1": {"m_hat": vg1.m_hat, "r_squared": vg1.r_squared},
        "vg_tree": {"m_hat": vgt.m_hat, "r_squared": vgt.r_squared},
        "cde_falsify": res.to_dict(z1)})
    return out


def _half_line_density(seed: int) -> ScenarioOutcome:
    cfg = {"graph": "lattice:1", "psi": "halfline:1", "p": 2.0, "lambda": 1.0,
           "solver": {"radius_schedule": [16, 32, 64]}}
    out = ScenarioOutcome("thm16-density")
    fam = GraphFamily("lattice", 1)
    psi = make_psi(cfg["psi"])
    prof = density_profile(fam, psi, 1.0, [1, 2, 4, 8, 16])
    bound = density_bound(prof, 2.0)
    out.check("density estimate equals 1", prof.D_bar_estimate == 1.0, repr(prof.D_bar_estimate))
    out.check("density bound equals 1", bound is not None and abs(bound - 1.0) <= 1e-12, repr(bound))
    est = estimate_lifespan(fam, psi, 1.0, 2.0, radius_schedule=cfg["solver"]["radius_schedule"])
    low = lower_bound_basic(1.0, 1.0, 2.0)
    out.check("simulated lifespan within the density bound", est.bracket[0] <= bound + 1e-6,
              repr(est.bracket))
    out.check("simulated lifespan above the lower bound", est.bracket[0] >= low - 1e-8,
              repr(est.bracket))
    rows = [{"r": r, "density": d} for r, d in prof.per_radius]
    out.artifacts["thm16-density.csv"] = csv_text(["r", "density"], rows, config_hash(cfg))
    out.artifacts["thm16-density.json"] = json_text(
        {"kind": "density", "config": cfg, "rows": rows, "D_bar": prof.D_bar_estimate,
         "bound": bound, "note": prof.estimator_note, "estimate": est.to_dict()})
    return out


PRESETS: dict[str, Callable[[int], ScenarioOutcome]] = {
    "single-vertex-exact": _single_vertex_exact,
    "thm24-sandwich": _random_graph_sandwich,
    "thm21-large-lambda": _large_scale_trend,
    "thm23-ec": _far_witness_line,
    "thm22-hypotheses": _growth_and_curvature,
    "thm16-density": _half_line_density,
}


def run_scenario(name: str, out_dir=None, seed: int = DEFAULT_SEED) -> ScenarioOutcome:
    """Run a preset, write its artifacts and report under ``out_dir``; unknown names raise KeyError."""
    if name not in PRESETS:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(sorted(PRESETS))}")
    outcome = PRESETS[name](seed)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for fname, text in outcome.artifacts.items():
            (d / fname).write_text(text)
        (d / f"{name}-report.json").write_text(json_text(outcome.report()))
    return outcome


# plot data ----------------------------------------------------------------------------

PLOT_COLUMNS = {
    "sweep": ["lambda", "scaled_lifespan", "lower_bound", "upper_bound"],
    "lifespan": ["radius", "T_estimate"],
    "density": ["r", "density"],
}


def emit_plotdata(artifact, out_path=None) -> str:
    """Tidy CSV (one observation per row) from a sweep, lifespan or density artifact (path or dict)."""
    if isinstance(artifact, (str, Path)):
        path = Path(artifact)
        if not path.exists():
            raise FileNotFoundError(f"missing artifact {path}")
        artifact = json.loads(path.read_text())
    kind = artifact.get("kind")
    if kind not in PLOT_COLUMNS:
        raise ValueError(f"artifact kind {kind!r} has no plot series")
    cols = PLOT_COLUMNS[kind]
    rows = [{c: r.get(c) for c in cols} for r in artifact["rows"]]
    text = csv_text(cols, rows, config_hash(artifact.get("config", {})))
    if out_path is not None:
        Path(out_path).write_text(text)
    return text
