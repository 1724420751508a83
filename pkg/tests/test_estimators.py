import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from majorant.errors import PreconditionError
from majorant.estimators import CascadeSolver, PicardSolver


def test_params_round_trip(isq):
    est = PicardSolver(kernel=isq, T=0.2, K=3)
    assert est.get_params()["K"] == 3
    c = clone(est).set_params(K=5)
    assert c.K == 5 and est.K == 3
    assert c.kernel.to_config() == isq.to_config()


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        PicardSolver().predict([[0, 1, 2, 0.1]])


def test_picard_solver_fit_predict(isq, packet):
    est = PicardSolver(kernel=isq, T=0.1, K=2, n_steps=16).fit(packet)
    assert len(est.result_.iterates) == 3
    assert est.contraction_ is not None
    pred = est.predict([[0, 1, 2, 0.1], [0, 1, 2, 0.0]])
    assert pred.shape == (2, 3)
    assert np.allclose(pred[1], packet.values[tuple(np.array([0, 1, 2]) + 8)])
    with pytest.raises(PreconditionError):
        est.predict([[0, 1, 0.1]])


def test_cascade_solver_agrees_with_picard_at_depth_zero(isq, packet):
    pic = PicardSolver(kernel=isq, T=0.2, K=1, n_steps=16).fit(packet)
    cas = CascadeSolver(kernel=isq, N=4000, depth_cap=0).fit(packet)
    X = [[0, 1, 2, 0.2]]
    est = cas.estimate(X)[0]
    ref = pic.predict(X, iterate=0)[0]
    assert np.all(np.abs(est.mean - ref) <= 4 * est.stderr + 1e-12)
    assert np.array_equal(cas.predict(X)[0], est.mean)


def test_cascade_solver_needs_kernel(packet):
    with pytest.raises(PreconditionError):
        CascadeSolver().fit(packet)
