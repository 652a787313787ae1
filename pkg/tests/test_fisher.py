import numpy as np
import pytest

from photonest.dynamics import steady_state_ee
from photonest.params import AtomParams
from photonest.fisher import (
    crb_sigma,
    fisher_analytic_rabi,
    fisher_analytic_rabi_per_time,
    fisher_low_eta,
    fisher_per_photon,
    scan,
)


def test_closed_form_values():
    p = AtomParams(omega=5.0)
    assert fisher_analytic_rabi(p) == pytest.approx(8.16, rel=1e-12)
    assert fisher_analytic_rabi_per_time(p) == pytest.approx(4.0, rel=1e-12)
    q = AtomParams(omega=2.0, gamma=2.0)
    assert fisher_analytic_rabi(q) == pytest.approx(8 / 4 + 4 / 4, rel=1e-12)


def test_closed_form_validation():
    with pytest.raises(ValueError):
        fisher_analytic_rabi(AtomParams(omega=5.0, delta=1.0))
    with pytest.raises(ValueError):
        fisher_analytic_rabi(AtomParams(omega=5.0, eta=0.5))
    with pytest.raises(ValueError):
        fisher_analytic_rabi(AtomParams(omega=0.0))


def test_numeric_recovers_closed_form():
    p = AtomParams(omega=8.0)
    res = fisher_per_photon(p, "omega")
    assert res.f_per_photon == pytest.approx(fisher_analytic_rabi(p), rel=1e-3)
    assert res.f_per_time == pytest.approx(4.0, rel=1e-3)
    assert res.crb_per_photon == pytest.approx(1 / np.sqrt(res.f_per_photon), rel=1e-12)


def test_diagnostics_contract():
    res = fisher_per_photon(AtomParams(omega=5.0), "omega")
    d = res.diagnostics
    assert d["step_agreement"] <= 1e-2
    assert d["f_log_form"] == pytest.approx(res.f_per_photon, rel=5e-3)
    assert d["grid_points"] > 1000
    assert d["mass"] >= 1 - 1e-8
    # density nodes at full efficiency produce curvature flags; a smooth
    # finite-efficiency density produces fewer
    smooth = fisher_per_photon(AtomParams(omega=5.0, eta=0.4), "omega").diagnostics
    assert d["kink_points_h"] > smooth["kink_points_h"]


def test_invalid_theta_rejected():
    with pytest.raises(ValueError):
        fisher_per_photon(AtomParams(omega=5.0), "phase")


def test_low_eta_limit_is_rate_information():
    # rate-only information: (d/dtheta ln ee_st)^2 per detected photon
    p = AtomParams(omega=2.0, eta=1e-3)
    h = 1e-6
    up = np.log(steady_state_ee(p.with_value("omega", 2.0 + h)))
    dn = np.log(steady_state_ee(p.with_value("omega", 2.0 - h)))
    oracle = ((up - dn) / (2 * h)) ** 2
    assert fisher_low_eta(p, "omega") == pytest.approx(oracle, rel=1e-6)
    assert fisher_low_eta(AtomParams(omega=5.0, eta=1e-3), "delta") == 0.0


def test_detuning_information_vanishes_on_resonance():
    res = fisher_per_photon(AtomParams(omega=2.0), "delta")
    assert abs(res.f_per_photon) < 1e-6


def test_detuning_information_is_even():
    a = fisher_per_photon(AtomParams(omega=2.0, delta=1.0), "delta").f_per_photon
    b = fisher_per_photon(AtomParams(omega=2.0, delta=-1.0), "delta").f_per_photon
    assert a == pytest.approx(b, rel=1e-9)
    assert a > 0


def test_crb_sigma():
    assert crb_sigma(8.16, 1e4) == pytest.approx(3.500700e-3, rel=1e-6)
    assert crb_sigma(2.0, 50) == pytest.approx(1 / np.sqrt(100.0), rel=1e-12)
    with pytest.raises(ValueError):
        crb_sigma(0.0, 100)
    with pytest.raises(ValueError):
        crb_sigma(8.16, 0)


def test_scan_flags_bad_rows_and_keeps_going():
    rows = scan(AtomParams(omega=5.0), "omega", omegas=[0.0, 2.0], etas=[1.0])
    assert len(rows) == 2
    bad, good = rows
    assert not bad.ok and bad.error is not None and bad.result is None
    assert good.ok and good.error is None
    assert good.result.f_per_photon == pytest.approx(9.0, rel=1e-3)


def test_scan_parallel_matches_serial():
    base = AtomParams(omega=5.0)
    serial = scan(base, "omega", omegas=[2.0, 5.0], etas=[1.0], jobs=1)
    parallel = scan(base, "omega", omegas=[2.0, 5.0], etas=[1.0], jobs=2)
    for a, b in zip(serial, parallel):
        assert a.params == b.params
        assert a.result.f_per_photon == b.result.f_per_photon
