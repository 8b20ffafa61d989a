"""Argument checks shared by the estimators and the command line."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import GraphFamily, WeightedGraph, build_graph


def check_graph(graph) -> WeightedGraph | GraphFamily:
    """Accept a graph, a family or a descriptor string and return the built object."""
    if isinstance(graph, (WeightedGraph, GraphFamily)):
        return graph
    if isinstance(graph, str) or isinstance(graph, dict):
        return build_graph(graph)
    raise TypeError(f"cannot interpret {type(graph).__name__} as a graph")


def check_finite_graph(graph) -> WeightedGraph:
    g = check_graph(graph)
    if isinstance(g, GraphFamily):
        raise ValueError("a finite graph is required here; give a truncation radius")
    return g


def check_exponent(p) -> float:
    p = float(p)
    if not np.isfinite(p) or p <= 1:
        raise ValueError(f"exponent p must be a finite number above 1, got {p}")
    return p


def check_scale(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    return lam


def check_lambda_grid(grid: Sequence[float]) -> list[float]:
    vals = [check_scale(x) for x in grid]
    if not vals:
        raise ValueError("lambda grid is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("lambda grid must be strictly increasing")
    return vals


def check_psi(
    g: WeightedGraph, psi, allow_zero: bool = False, require_positive: bool = False
) -> np.ndarray:
    """Vertex values of ``psi`` on ``g``: finite, nonnegative, and nonzero unless allowed."""
    if callable(psi):
        psi = psi(g)
    if np.isscalar(psi):
        v = np.full(g.n, float(psi))
    else:
        v = np.asarray(getattr(psi, "values", psi), dtype=float).reshape(-1)
    if v.shape != (g.n,):
        raise ValueError(f"psi has {v.size} values for a graph with {g.n} vertices")
    if not np.all(np.isfinite(v)):
        raise ValueError("psi must be finite")
    if (v < 0).any():
        raise ValueError(f"psi must be nonnegative (min {v.min():.3g})")
    if not allow_zero and not (v > 0).any():
        raise ValueError("psi must not vanish identically")
    if require_positive and v.min() <= 0:
        raise ValueError("psi must be strictly positive")
    return v


def check_times(t) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if not np.all(np.isfinite(ts)) or (ts < 0).any():
        raise ValueError("times must be finite and nonnegative")
    return ts
