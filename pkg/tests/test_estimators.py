import numpy as np
import pytest
from sklearn.base import clone

from photonest import bayes, linear
from photonest.estimators import GridFilter, LinearWaitingTimeEstimator
from photonest.records import simulate_record

CANDS = [2.5, 5.0, 7.5]


@pytest.fixture(scope="module")
def record(rabi5):
    return simulate_record(rabi5, n_clicks=200, seed=2)


def test_grid_filter_matches_functional_route(rabi5, record):
    est = GridFilter(candidates=CANDS).fit(record)
    ref = bayes.loglik_record(record, "omega", CANDS)
    np.testing.assert_allclose(est.log_weights_, ref.log_weights, rtol=1e-12)
    np.testing.assert_allclose(est.posterior_, ref.posterior(), rtol=1e-12)
    assert est.theta_ == CANDS[int(np.argmax(ref.posterior()))]
    assert est.predict() == est.theta_
    assert est.predict(record) == est.theta_


def test_grid_filter_stepped_route_agrees(record):
    a = GridFilter(candidates=CANDS, route="stepped", dt=5e-3).fit(record)
    b = GridFilter(candidates=CANDS).fit(record)
    assert a.theta_ == b.theta_
    assert a.posterior_[1] > 0.9


def test_grid_filter_validation(record):
    with pytest.raises(ValueError):
        GridFilter().fit(record)
    with pytest.raises(ValueError):
        GridFilter(candidates=CANDS, route="wrong").fit(record)


def test_grid_filter_is_cloneable(record):
    est = GridFilter(candidates=CANDS, prior=[0.2, 0.6, 0.2], dt=5e-3)
    dup = clone(est)
    assert dup.get_params() == est.get_params()
    fitted = est.fit(record)
    assert fitted is est


def test_linear_estimator_matches_trace(record):
    est = LinearWaitingTimeEstimator(theta0=5.0, schedule=[100, 200]).fit(record)
    trace = linear.estimate_trace(record, theta0=5.0, schedule=[100, 200])
    assert [s.theta_hat for s in est.trace_] == [s.theta_hat for s in trace]
    assert est.theta_ == trace[-1].theta_hat
    assert est.sigma_ == trace[-1].sigma
    assert est.n_used_ == 200
    assert est.predict() == est.theta_


def test_linear_estimator_defaults_and_clone(record):
    est = LinearWaitingTimeEstimator()
    dup = clone(est)
    assert dup.get_params() == est.get_params()
    fitted = est.fit(record)
    assert fitted is est
    # default schedule on a 200-click record collapses to a single point
    assert est.trace_[-1].n_used == 200


def test_unfitted_predict_raises(record):
    with pytest.raises(Exception):
        GridFilter(candidates=CANDS).predict()
    with pytest.raises(Exception):
        LinearWaitingTimeEstimator().predict()
