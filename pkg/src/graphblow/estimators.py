"""Estimator-style wrappers: fit on initial data, predict lifespans; fit a kernel, transform signals."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bounds import kaplan_bound_auto, lower_bound_basic, sandwich_finite
from .evolution import estimate_lifespan
from .graph import GraphFamily, WeightedGraph
from .heat_kernel import heat_kernel
from .validation import check_exponent, check_finite_graph, check_graph, check_psi, check_scale


class LifespanEstimator(BaseEstimator):
    """Blow-up time of ``u_t = Delta u + u^p`` as a function of the data scale.

    ``fit(psi)`` validates the initial profile on the graph; ``predict`` maps
    an array of scales ``lambda`` to lifespans of the data ``lambda * psi``
    (``inf`` when nothing blows up before ``T_max``).

    >>> est = LifespanEstimator(graph="cycle:6", p=2.0).fit(np.ones(6))
    >>> round(float(est.predict([2.0])[0]), 6)
    0.5
    """

    def __init__(self, graph="single", p: float = 2.0, tol: float = 1e-6, T_max: float = 100.0,
                 rtol: float = 1e-10, radius_schedule=None):
        self.graph = graph
        self.p = p
        self.tol = tol
        self.T_max = T_max
        self.rtol = rtol
        self.radius_schedule = radius_schedule

    def fit(self, psi, y=None):
        self.graph_ = check_graph(self.graph)
        self.p_ = check_exponent(self.p)
        probe = self.graph_.truncate(8) if isinstance(self.graph_, GraphFamily) else self.graph_
        if callable(psi):
            check_psi(probe, psi)
            self.psi_ = psi
        else:
            if isinstance(self.graph_, GraphFamily):
                raise ValueError("initial data on an infinite family must be a rule (callable)")
            self.psi_ = check_psi(self.graph_, psi)
        self.psi_sup_ = float(check_psi(probe, psi).max())
        self.estimates_ = {}
        return self

    def lower_bound(self, lambdas) -> np.ndarray:
        check_is_fitted(self, "psi_")
        return np.array([lower_bound_basic(check_scale(l), self.psi_sup_, self.p_) for l in np.ravel(lambdas)])

    def predict(self, lambdas) -> np.ndarray:
        check_is_fitted(self, "psi_")
        out = []
        for lam in np.ravel(lambdas):
            lam = check_scale(lam)
            est = estimate_lifespan(self.graph_, self.psi_, lam, self.p_, tol=self.tol,
                                    radius_schedule=self.radius_schedule, T_max=self.T_max,
                                    rtol=self.rtol)
            self.estimates_[lam] = est
            out.append(est.T_est)
        return np.array(out)

    def bounds(self, lam: float) -> dict:
        """Lower bound, best eigenfunction bound and (for positive data) the sandwich at ``lam``."""
        check_is_fitted(self, "psi_")
        lam = check_scale(lam)
        out = {"lower": lower_bound_basic(lam, self.psi_sup_, self.p_)}
        if isinstance(self.graph_, WeightedGraph):
            kap = kaplan_bound_auto(self.graph_, lam, self.psi_, self.p_)
            out["kaplan"] = None if kap is None else kap.T_up
            if np.min(self.psi_) > 0:
                s = sandwich_finite(self.psi_, self.p_)
                out["t1"], out["t2"] = s.t1(lam), s.t2(lam)
        return out


class HeatKernelSmoother(TransformerMixin, BaseEstimator):
    """Heat-flow smoothing of vertex signals: row ``f`` maps to ``sum_y P(t, ., y) f(y) mu(y)``."""

    def __init__(self, graph="path:2", t: float = 1.0, method: str = "expm"):
        self.graph = graph
        self.t = t
        self.method = method

    def fit(self, X=None, y=None):
        self.graph_ = check_finite_graph(self.graph)
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        self.kernel_ = heat_kernel(self.graph_, float(self.t), self.method)
        self.n_features_in_ = self.graph_.n
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "kernel_")
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} vertex values per row, got {X2.shape[1]}")
        out = (X2 * self.graph_.mu) @ self.kernel_.entries.T
        return out[0] if single else out
