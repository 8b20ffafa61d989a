import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from graphblow.estimators import HeatKernelSmoother, LifespanEstimator
from graphblow.graph import GraphFamily, path_graph


def test_params_roundtrip():
    est = LifespanEstimator(graph="cycle:4", p=3.0, tol=1e-5)
    assert est.get_params()["p"] == 3.0
    c = clone(est.set_params(T_max=5.0))
    assert c.get_params()["T_max"] == 5.0 and not hasattr(c, "psi_")


def test_predict_constant_cycle():
    est = LifespanEstimator(graph="cycle:6", p=2.0).fit(np.ones(6))
    T = est.predict([1.0, 2.0, 4.0])
    np.testing.assert_allclose(T, [1.0, 0.5, 0.25], atol=1e-6)
    np.testing.assert_allclose(est.lower_bound([2.0]), [0.5])
    b = est.bounds(2.0)
    assert b["t1"] == b["t2"] == pytest.approx(0.5)


def test_family_needs_rule():
    est = LifespanEstimator(graph=GraphFamily("lattice", 1))
    with pytest.raises(ValueError):
        est.fit(np.ones(3))
    est.fit(lambda g: np.ones(g.n))
    assert est.psi_sup_ == 1.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        LifespanEstimator().predict([1.0])
    with pytest.raises(NotFittedError):
        HeatKernelSmoother().transform(np.ones(2))


def test_bad_parameters():
    with pytest.raises(ValueError):
        LifespanEstimator(p=1.0).fit(np.ones(1))
    with pytest.raises(ValueError):
        LifespanEstimator().fit(np.ones(1)).predict([-1.0])


def test_smoother_two_vertex():
    t = 0.7
    sm = HeatKernelSmoother(graph=path_graph(2), t=t).fit()
    out = sm.transform(np.array([1.0, 0.0]))
    e = np.exp(-2 * t)
    np.testing.assert_allclose(out, [(1 + e) / 2, (1 - e) / 2], atol=1e-14)
    np.testing.assert_allclose(sm.transform(np.ones((3, 2))), np.ones((3, 2)), atol=1e-14)
    with pytest.raises(ValueError):
        sm.transform(np.ones(3))


def test_smoother_methods_agree():
    a = HeatKernelSmoother(graph="cycle:7", t=1.5).fit().transform(np.eye(7))
    b = HeatKernelSmoother(graph="cycle:7", t=1.5, method="series").fit().transform(np.eye(7))
    np.testing.assert_allclose(a, b, atol=1e-12)
