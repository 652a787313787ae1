import math

import pytest

from photonest.params import AtomParams, DensityMatrix, PureState, default_dt


def test_defaults():
    p = AtomParams(omega=5.0)
    assert p.delta == 0.0
    assert p.gamma == 1.0
    assert p.eta == 1.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"omega": -1.0},
        {"omega": 5.0, "gamma": 0.0},
        {"omega": 5.0, "gamma": -2.0},
        {"omega": 5.0, "eta": 0.0},
        {"omega": 5.0, "eta": 1.5},
        {"omega": float("nan")},
        {"omega": 5.0, "delta": float("inf")},
    ],
)
def test_param_validation(kwargs):
    with pytest.raises(ValueError):
        AtomParams(**kwargs)


def test_with_eta_and_with_value():
    p = AtomParams(omega=5.0, delta=1.0)
    q = p.with_eta(0.4)
    assert q.eta == 0.4
    assert q.omega == p.omega and q.delta == p.delta
    r = p.with_value("omega", 2.0)
    assert r.omega == 2.0 and r.delta == 1.0
    with pytest.raises(ValueError):
        p.with_value("phase", 1.0)


def test_pure_state_norm():
    g = PureState.ground()
    assert g.norm_sq == 1.0
    s = PureState(0.6 + 0.0j, 0.0 + 0.8j)
    assert math.isclose(s.norm_sq, 1.0)
    with pytest.raises(ValueError):
        PureState(1.0 + 0.0j, 1.0 + 0.0j)


def test_density_matrix_checks():
    rho = DensityMatrix.ground()
    assert rho.trace == 1.0
    with pytest.raises(ValueError):
        DensityMatrix(-0.1, 0.5)
    with pytest.raises(ValueError):
        DensityMatrix(0.8, 0.8)
    with pytest.raises(ValueError):
        DensityMatrix(0.5, 0.1, 0.4 + 0.0j)  # |rho_ge|^2 > rho_gg * rho_ee


def test_default_dt_scales_with_fastest_rate():
    assert default_dt(AtomParams(omega=5.0)) == pytest.approx(2e-4)
    assert default_dt(AtomParams(omega=0.5)) == pytest.approx(1e-3)
    assert default_dt(AtomParams(omega=1.0, delta=10.0)) == pytest.approx(1e-4)
