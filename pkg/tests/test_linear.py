import numpy as np
import pytest

from photonest import linear
from photonest.errors import NumericalFailure
from photonest.fisher import crb_sigma, fisher_analytic_rabi
from photonest.records import waiting_times

N_REF = 10_000


@pytest.fixture(scope="module")
def ensemble_taus(records_1e4):
    return [waiting_times(r).taus for r in records_1e4[:200]]


@pytest.fixture(scope="module")
def shared_gain(rabi5, ensemble_taus):
    cover = max(float(t.max()) for t in ensemble_taus)
    table, dw = linear.density_and_slope(rabi5, "omega", cover=cover)
    return linear.build_gain(table, dw, n_ref=N_REF, theta_prior=5.0)


def test_gain_zeroes_offset_at_the_prior(shared_gain):
    # expected update at theta = theta_prior is exactly zero by construction
    mid_w = shared_gain.w
    dtau = shared_gain.tau_grid[1] - shared_gain.tau_grid[0]
    residual = N_REF * float(np.sum(shared_gain.g * mid_w) * dtau) + shared_gain.C
    assert abs(residual) < 1e-9 * max(abs(shared_gain.C), 1.0)


def test_gain_respects_density_floor(shared_gain):
    floor = linear.W_FLOOR_FRAC * shared_gain.w.max()
    assert np.all(shared_gain.g[shared_gain.w < floor] == 0.0)
    assert np.all(np.isfinite(shared_gain.g))


def test_gain_weights_timing_drift_not_raw_slope(shared_gain):
    # the per-click information peaks where the phase sensitivity tau
    # times the decay envelope is largest (near tau = 2 / gamma), far
    # from the steepest point of the density itself (tau ~ 0.3)
    mid = 0.5 * (shared_gain.tau_grid[:-1] + shared_gain.tau_grid[1:])
    peak = mid[np.argmax(np.abs(shared_gain.g * shared_gain.w))]
    assert 1.5 <= peak <= 3.0


def test_discrete_info_near_quadrature_value(rabi5, shared_gain):
    assert shared_gain.f_pp == pytest.approx(fisher_analytic_rabi(rabi5), rel=0.03)
    assert shared_gain.beta == pytest.approx(2 / (N_REF * shared_gain.f_pp), rel=1e-12)


def test_two_estimate_forms_agree(shared_gain, ensemble_taus):
    hist = linear.histogram_waiting_times(ensemble_taus[0], shared_gain.tau_grid)
    a = linear.linear_estimate(hist, shared_gain)
    b = linear.linear_estimate_relative(hist, shared_gain)
    assert a == pytest.approx(b, abs=1e-10)


def test_one_shot_ensemble_sits_on_the_bound(rabi5, shared_gain, ensemble_taus):
    updates = np.array(
        [
            linear.linear_estimate(linear.histogram_waiting_times(t, shared_gain.tau_grid), shared_gain)
            for t in ensemble_taus
        ]
    )
    crb = crb_sigma(fisher_analytic_rabi(rabi5), N_REF)
    spread = updates.std(ddof=1)
    assert 0.85 <= spread / crb <= 1.15
    assert abs(updates.mean()) < 0.1 * crb


def test_pull_back_toward_truth(rabi5, ensemble_taus):
    # with the prior displaced by +1% the mean update must walk it back
    cover = max(float(t.max()) for t in ensemble_taus)
    table, dw = linear.density_and_slope(rabi5.with_value("omega", 5.05), "omega", cover=cover)
    gain = linear.build_gain(table, dw, n_ref=N_REF, theta_prior=5.05)
    updates = np.array(
        [
            linear.linear_estimate(linear.histogram_waiting_times(t, gain.tau_grid), gain)
            for t in ensemble_taus
        ]
    )
    assert updates.mean() == pytest.approx(-0.05, rel=0.2)


def test_histogram_contract(shared_gain, ensemble_taus):
    taus = ensemble_taus[0][:500]
    hist = linear.histogram_waiting_times(taus, shared_gain.tau_grid)
    assert hist.counts.sum() == 500
    assert np.issubdtype(hist.counts.dtype, np.integer)
    with pytest.raises(ValueError):
        linear.histogram_waiting_times(np.array([shared_gain.tau_grid[-1] + 1.0]), shared_gain.tau_grid)
    with pytest.raises(ValueError):
        linear.histogram_waiting_times(np.array([-0.1]), shared_gain.tau_grid)
    with pytest.raises(ValueError):
        linear.histogram_waiting_times(np.array([0.5]), np.array([0.0, 0.1, 0.3, 0.6]))


def test_estimate_rejects_foreign_grid(rabi5, shared_gain, ensemble_taus):
    other_table, other_dw = linear.density_and_slope(rabi5, "omega", points_per_period=320)
    other_gain = linear.build_gain(other_table, other_dw, n_ref=N_REF)
    hist = linear.histogram_waiting_times(ensemble_taus[0], shared_gain.tau_grid)
    with pytest.raises(ValueError):
        linear.linear_estimate(hist, other_gain)


def test_build_gain_validation(rabi5):
    table, dw = linear.density_and_slope(rabi5, cover=12.0)
    with pytest.raises(ValueError):
        linear.build_gain(table, np.zeros_like(dw), n_ref=1000)
    with pytest.raises(ValueError):
        linear.build_gain(table, dw, n_ref=0)
    with pytest.raises(ValueError):
        linear.build_gain(table, dw[:-1], n_ref=1000)


def test_default_schedule():
    assert linear.default_schedule(50) == [50]
    sched = linear.default_schedule(10_000)
    assert len(sched) == linear.SCHEDULE_POINTS
    assert sched[0] == linear.SCHEDULE_START
    assert sched[-1] == 10_000
    assert all(b > a for a, b in zip(sched, sched[1:]))


def test_schedule_must_fit_record(records_1e4):
    with pytest.raises(ValueError):
        linear.estimate_trace(records_1e4[0], schedule=[100, 20_000])
    with pytest.raises(ValueError):
        linear.estimate_trace(records_1e4[0], schedule=[0, 100])


def test_single_point_schedule_equals_one_shot(rabi5, records_1e4):
    rec = records_1e4[0]
    trace = linear.estimate_trace(rec, theta0=5.0, schedule=[N_REF])
    assert len(trace) == 1

    taus = waiting_times(rec).taus
    table, dw = linear.density_and_slope(rabi5, "omega", cover=float(taus.max()))
    gain = linear.build_gain(table, dw, n_ref=N_REF, theta_prior=5.0)
    hist = linear.histogram_waiting_times(taus, gain.tau_grid)
    manual = 5.0 + linear.linear_estimate(hist, gain)
    assert trace[0].theta_hat == manual
    assert trace[0].n_used == N_REF
    assert trace[0].sigma == pytest.approx(1 / np.sqrt(N_REF * gain.f_pp), rel=1e-12)


def test_trust_region_rejects_remote_start(records_1e4):
    with pytest.raises(NumericalFailure):
        linear.estimate_trace(records_1e4[2], theta0=2.0, schedule=[100])


def test_mle_init_lands_near_truth(records_1e4):
    assert abs(linear.mle_init(records_1e4[50]) - 5.0) < 0.5
    picked = linear.mle_init(records_1e4[50], grid_values=[3.0, 5.0, 8.0])
    assert picked == 5.0


SCHEDULE = [100, 316, 1000, 2500, 10_000]


@pytest.fixture(scope="module")
def pilot_traces(records_1e4):
    return [linear.estimate_trace(r, schedule=SCHEDULE) for r in records_1e4[:100]]


def test_interval_coverage_along_schedule(pilot_traces):
    # with at least 1000 clicks the trace should sit inside the three
    # sigma band around truth for nearly every record
    covered = 0
    for trace in pilot_traces:
        ok = all(abs(s.theta_hat - 5.0) <= 3 * s.sigma for s in trace if s.n_used >= 1000)
        covered += ok
    assert covered >= 90


def test_error_shrinks_as_root_n(pilot_traces):
    finals = np.array([t[-1].theta_hat for t in pilot_traces])
    mids = np.array([t[3].theta_hat for t in pilot_traces])
    ratio = finals.std(ddof=1) / mids.std(ddof=1)
    assert 0.375 <= ratio <= 0.625
    assert all(t[3].n_used == 2500 for t in pilot_traces)


def test_reported_sigma_tracks_schedule(pilot_traces):
    for trace in pilot_traces[:5]:
        sigmas = [s.sigma for s in trace]
        assert all(b < a for a, b in zip(sigmas, sigmas[1:]))


def test_bin_halving_is_inert(records_1e4):
    rec = records_1e4[3]
    base = linear.estimate_trace(rec, theta0=5.0, schedule=SCHEDULE)
    fine = linear.estimate_trace(rec, theta0=5.0, schedule=SCHEDULE, points_per_period=320)
    assert abs(base[-1].theta_hat - fine[-1].theta_hat) < 0.2 * base[-1].sigma
