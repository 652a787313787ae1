import numpy as np
import pytest

from photonest import bayes
from photonest.params import AtomParams
from photonest.records import ClickRecord, simulate_record, waiting_times

CANDS = [2.5, 5.0, 7.5]


@pytest.fixture(scope="module")
def tables(rabi5):
    return bayes.candidate_tables(rabi5, "omega", CANDS, cover=60.0)


def test_init_grid_validation(rabi5):
    with pytest.raises(ValueError):
        bayes.init_grid(rabi5, "omega", [])
    with pytest.raises(ValueError):
        bayes.init_grid(rabi5, "omega", CANDS, prior=[1.0])
    with pytest.raises(ValueError):
        bayes.init_grid(rabi5, "omega", [2.0, 5.0], prior=[-1.0, 2.0])
    with pytest.raises(ValueError):
        bayes.init_grid(rabi5, "phase", CANDS)


def test_fresh_grid_posterior_is_prior(rabi5):
    g = bayes.init_grid(rabi5, "omega", CANDS)
    np.testing.assert_allclose(g.posterior(), [1 / 3, 1 / 3, 1 / 3], rtol=1e-12)
    g2 = bayes.init_grid(rabi5, "omega", CANDS, prior=[0.25, 0.5, 0.25])
    np.testing.assert_allclose(g2.posterior(), [0.25, 0.5, 0.25], rtol=1e-12)
    np.testing.assert_allclose(bayes.posterior(g2), g2.posterior(), rtol=1e-12)
    with pytest.raises(ValueError):
        bayes.init_grid(rabi5, "omega", CANDS, prior=[1.0, 2.0, 1.0])


def test_candidate_params_swap_theta(rabi5):
    g = bayes.init_grid(rabi5, "omega", CANDS)
    assert [q.omega for q in g.candidate_params()] == CANDS
    gd = bayes.init_grid(rabi5, "delta", [-1.0, 0.0, 1.0])
    assert [q.delta for q in gd.candidate_params()] == [-1.0, 0.0, 1.0]
    assert all(q.omega == 5.0 for q in gd.candidate_params())


def test_single_wait_scores_by_density(rabi5, tables):
    tau = np.array([0.9])
    g = bayes.loglik_waiting_times(tau, rabi5, "omega", CANDS, tables=tables, include_survival=False)
    expect = np.log(1 / 3) + np.array([np.log(t.interp(tau)[0]) for t in tables])
    np.testing.assert_allclose(g.log_weights, expect, rtol=1e-9)


def test_open_interval_multiplies_survival(rabi5, tables):
    taus = np.array([1.0, 2.0])
    closed = bayes.loglik_waiting_times(taus, rabi5, "omega", CANDS, tables=tables)
    open_ = bayes.loglik_waiting_times(taus, rabi5, "omega", CANDS, tables=tables, open_interval=3.0)
    for k, t in enumerate(tables):
        assert open_.log_weights[k] - closed.log_weights[k] == pytest.approx(np.log(t.survival(3.0)), rel=1e-9)


def test_empty_record_scores_by_survival(rabi5, tables):
    rec = ClickRecord(times=np.array([]), duration=3.0, params=rabi5, seed=0, stream=0)
    g = bayes.loglik_record(rec, "omega", CANDS, tables=tables)
    expect = np.log(1 / 3) + np.array([np.log(t.survival(3.0)) for t in tables])
    np.testing.assert_allclose(g.log_weights, expect, rtol=1e-6)


def test_precomputed_tables_change_nothing(rabi5):
    rec = simulate_record(rabi5, n_clicks=40, seed=3)
    taus = waiting_times(rec).taus
    cover = float(taus.max()) + 1.0
    tabs = bayes.candidate_tables(rabi5, "omega", CANDS, cover=cover)
    a = bayes.loglik_waiting_times(taus, rabi5, "omega", CANDS, tables=tabs)
    b = bayes.loglik_waiting_times(taus, rabi5, "omega", CANDS)
    np.testing.assert_allclose(a.log_weights, b.log_weights, rtol=1e-9)


def test_truth_wins_after_twenty_clicks(rabi5, tables):
    rec = simulate_record(rabi5, n_clicks=20, seed=3)
    g = bayes.loglik_record(rec, "omega", CANDS, tables=tables)
    post = g.posterior()
    assert post[1] > 0.9


def test_step_dt_rejects_coarse_click_bins(rabi5):
    # silent stretches of any width are integrated with substeps, but a
    # click bin must keep gamma dt rho_ee below one
    g = bayes.init_grid(rabi5, "omega", CANDS)
    for _ in range(100):
        g = bayes.step_dt(g, click=False, dt=1e-2)
    with pytest.raises(ValueError):
        bayes.step_dt(g, click=True, dt=5.0)
    with pytest.raises(ValueError):
        bayes.step_dt(g, click=True, dt=-1.0)


def test_no_click_stretch_favors_weak_drive(rabi5):
    g = bayes.init_grid(rabi5, "omega", CANDS)
    for _ in range(300):
        g = bayes.step_dt(g, click=False, dt=1e-2)
    post = g.posterior()
    assert np.argmax(post) == 0


def test_dt_route_approaches_interval_route(rabi5, tables):
    rec = simulate_record(rabi5, n_clicks=50, seed=3)
    ref = bayes.loglik_record(rec, "omega", CANDS, tables=tables).log_weights

    def centered_dev(dt):
        g = bayes.run_record_dt(rec, "omega", CANDS, dt=dt)
        d = g.log_weights - ref
        d = d - d.mean()
        return float(np.max(np.abs(d)))

    coarse, fine = centered_dev(1e-2), centered_dev(2.5e-3)
    assert fine < coarse
    assert fine < 0.3


def test_dt_trace_rows(rabi5):
    rec = simulate_record(rabi5, n_clicks=30, seed=3)
    grid, rows = bayes.run_record_dt(rec, "omega", CANDS, dt=1e-2, trace_every=50)
    rows = np.asarray(rows)
    assert rows.shape[1] == 1 + len(CANDS)
    assert np.all(np.diff(rows[:, 0]) > 0)
    np.testing.assert_allclose(rows[:, 1:].sum(axis=1), 1.0, rtol=1e-9)
    assert rows[-1, 0] == pytest.approx(rec.duration, abs=1e-6)
    silent = bayes.run_record_dt(rec, "omega", CANDS, dt=1e-2)
    np.testing.assert_allclose(silent.log_weights, grid.log_weights, rtol=1e-12)
