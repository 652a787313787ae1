"""Fisher information and Cramer-Rao bounds for waiting-time records.

The per-photon Fisher information for a parameter theta is computed from
the waiting-time density w(tau; theta) in amplitude form,

    F = 4 * integral (d sqrt(w) / d theta)^2 dtau,

which stays finite at the zeros of w where the log-derivative form
(dw/dtheta)^2 / w has integrable singularities. The derivative is a
central finite difference of sqrt(w) between tables at theta +- h built
on one shared grid. A second evaluation at step h/2 acts as an accuracy
gate: disagreement beyond 1 percent raises NumericalFailure instead of
returning a silently wrong number.

At unit efficiency the density touches zero between emissions and the
difference quotient of sqrt(w) develops a kink in a sliver of width
O(h) around each node. Those points are detected by comparing the
second difference of sqrt(w) across theta against the first difference
and repaired with the larger one-sided quotient, which bounds the
integrand instead of averaging across the kink.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dynamics import steady_state_ee
from .errors import NumericalFailure
from .params import AtomParams
from .wtd import DEFAULT_MASS_TARGET, WaitingTimeTable, choose_grid, wtd_numeric

THETA_NAMES = ("omega", "delta")

# Relative finite-difference step for theta, scaled by max(|theta|, gamma)
# so a detuning of zero still gets a sensible step.
DEFAULT_H_SCALE = 1e-4

# Relative disagreement between the h and h/2 evaluations above which the
# result is reported as a numerical failure rather than returned.
RICHARDSON_TOL = 1e-2

# Below this (in units of 1/gamma^2) the information is genuinely zero,
# e.g. F(delta) at delta = 0 where evenness kills the score identically,
# and the relative step gate would only compare rounding noise.
GATE_FLOOR_SCALE = 1e-9

# Density floor for the cross-check integrand (dw/dtheta)^2 / w. Points
# below the floor sit inside node slivers and are excluded there.
EQ_CHECK_FLOOR = 1e-12

# Kink detector threshold: a point is inside a node sliver when the second
# difference of sqrt(w) across theta exceeds KINK_KAPPA times the first.
# The sliver fold gives |second| ~ 2(s - |d|) against |first| ~ 2|d| for
# offset d and half-width s, so smaller kappa repairs a wider band
# (|d| < s / (1 + kappa)); in smooth regions |second|/|first| ~ h, far
# below any reasonable threshold, so false positives cost nothing.
KINK_KAPPA = 0.1

# Repaired points are capped by the largest central difference within
# this many grid points; slivers are narrower than the grid spacing at
# the default step, so the window always reaches smooth neighbors.
KINK_CAP_WINDOW = 3


@dataclass(frozen=True)
class FisherResult:
    """Fisher information for one parameter at one operating point."""

    theta: str
    params: AtomParams
    f_per_photon: float
    f_per_time: float
    crb_per_photon: float
    h: float
    diagnostics: dict = field(default_factory=dict, repr=False)


def _shifted(params: AtomParams, theta: str, value: float) -> AtomParams:
    if theta not in THETA_NAMES:
        raise ValueError(f"theta must be one of {THETA_NAMES}, got {theta!r}")
    return params.with_value(theta, value)


def _default_h(params: AtomParams, theta: str) -> float:
    base = abs(getattr(params, theta))
    return DEFAULT_H_SCALE * max(base, params.gamma)


def _sqrt_table(
    params: AtomParams, tau: np.ndarray, dt: float | None
) -> tuple[np.ndarray, np.ndarray]:
    table = wtd_numeric(params, tau, dt=dt)
    return np.sqrt(table.w), table.w


def _window_max(x: np.ndarray, k: int) -> np.ndarray:
    """Running maximum of x over a window of +-k points."""
    out = x.copy()
    for s in range(1, k + 1):
        out[s:] = np.maximum(out[s:], x[:-s])
        out[:-s] = np.maximum(out[:-s], x[s:])
    return out


def _phi_derivative(
    phi_plus: np.ndarray,
    phi_minus: np.ndarray,
    phi_center: np.ndarray,
    h: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Central difference of sqrt(w) with one-sided repair at kinks.

    Smooth points satisfy |phi_+ + phi_- - 2 phi_0| << |phi_+ - phi_-|;
    inside a node sliver the second difference dominates because the two
    branches of |sin| fold. Repaired points use the larger one-sided
    quotient, which recovers |d phi / d theta| there, capped by the
    largest central difference among nearby tau points: across a node
    the derivative magnitude is continuous at leading order, so the
    neighbors bound the sliver value, while at a genuine theta-extremum
    (for example any tau when estimating delta at delta = 0, where the
    density is even) the neighborhood is flat and the cap stops the
    repair from inventing signal out of curvature.
    """
    first = phi_plus - phi_minus
    second = phi_plus + phi_minus - 2.0 * phi_center
    kink = np.abs(second) > KINK_KAPPA * np.abs(first)
    dphi = first / (2.0 * h)
    if np.any(kink):
        one_sided = np.maximum(
            np.abs(phi_plus - phi_center), np.abs(phi_center - phi_minus)
        ) / h
        cap = _window_max(np.abs(dphi), KINK_CAP_WINDOW)
        dphi = np.where(kink, np.minimum(one_sided, cap), dphi)
    return dphi, kink


def _f_at_step(
    params: AtomParams,
    theta: str,
    tau: np.ndarray,
    phi_center: np.ndarray,
    w_center: np.ndarray,
    h: float,
    dt: float | None,
) -> tuple[float, float, int]:
    """Phi-form Fisher integral at one step h, plus the log-form check."""
    theta0 = getattr(params, theta)
    phi_p, w_p = _sqrt_table(_shifted(params, theta, theta0 + h), tau, dt)
    phi_m, w_m = _sqrt_table(_shifted(params, theta, theta0 - h), tau, dt)

    dphi, kink = _phi_derivative(phi_p, phi_m, phi_center, h)
    f_phi = 4.0 * np.trapezoid(dphi * dphi, tau)

    dw = (w_p - w_m) / (2.0 * h)
    keep = w_center >= EQ_CHECK_FLOOR
    ratio = np.zeros_like(w_center)
    np.divide(dw * dw, w_center, out=ratio, where=keep)
    f_log = float(np.trapezoid(ratio, tau))

    return float(f_phi), f_log, int(np.count_nonzero(kink))


def fisher_per_photon(
    params: AtomParams,
    theta: str = "omega",
    h: float | None = None,
    mass_target: float = DEFAULT_MASS_TARGET,
    dt: float | None = None,
    grid: np.ndarray | None = None,
) -> FisherResult:
    """Fisher information per detected photon for ``theta``.

    Tables at theta +- h and theta +- h/2 share one grid chosen at the
    central parameter point. Raises NumericalFailure when the two step
    sizes disagree by more than RICHARDSON_TOL, which flags an
    inaccurate derivative rather than hiding it.
    """
    if theta not in THETA_NAMES:
        raise ValueError(f"theta must be one of {THETA_NAMES}, got {theta!r}")
    if h is None:
        h = _default_h(params, theta)
    if not (np.isfinite(h) and h > 0):
        raise ValueError(f"h must be positive and finite, got {h}")

    if grid is None:
        grid = choose_grid(params, mass_target=mass_target)
    tau = np.asarray(grid, dtype=float)

    center = wtd_numeric(params, tau, dt=dt)
    phi_c = np.sqrt(center.w)

    f_h, f_log, kinks_h = _f_at_step(params, theta, tau, phi_c, center.w, h, dt)
    f_h2, _, kinks_h2 = _f_at_step(params, theta, tau, phi_c, center.w, h / 2.0, dt)

    scale = max(abs(f_h), abs(f_h2))
    floor = GATE_FLOOR_SCALE / params.gamma**2
    rel = abs(f_h - f_h2) / scale if scale > floor else 0.0
    if rel > RICHARDSON_TOL:
        raise NumericalFailure(
            f"finite-difference steps h={h:g} and h/2 disagree by "
            f"{rel:.2%} for theta={theta} at {params}; the derivative "
            "is not converged"
        )

    rate = params.eta * params.gamma * steady_state_ee(params)
    crb = float("inf") if f_h2 <= 0 else 1.0 / np.sqrt(f_h2)
    diagnostics = {
        "f_h": f_h,
        "f_h_half": f_h2,
        "step_agreement": rel,
        "f_log_form": f_log,
        "kink_points_h": kinks_h,
        "kink_points_h_half": kinks_h2,
        "grid_points": int(tau.size),
        "tau_max": float(tau[-1]),
        "mass": center.mass,
    }
    return FisherResult(
        theta=theta,
        params=params,
        f_per_photon=float(f_h2),
        f_per_time=float(f_h2 * rate),
        crb_per_photon=crb,
        h=float(h),
        diagnostics=diagnostics,
    )


def fisher_analytic_rabi(params: AtomParams) -> float:
    """Closed-form F/N for the Rabi frequency at delta=0, eta=1.

    F/N = 8 / gamma^2 + 4 / omega^2.
    """
    if params.delta != 0.0:
        raise ValueError("closed form requires delta == 0")
    if params.eta != 1.0:
        raise ValueError("closed form requires eta == 1")
    if params.omega == 0.0:
        raise ValueError("closed form requires omega > 0")
    return 8.0 / params.gamma**2 + 4.0 / params.omega**2


def fisher_analytic_rabi_per_time(params: AtomParams) -> float:
    """Closed-form F/T companion of :func:`fisher_analytic_rabi`.

    The per-photon form times the click rate gamma * rho_ee^st reduces
    to 4 / gamma, independent of omega.
    """
    fisher_analytic_rabi(params)  # same applicability checks
    return 4.0 / params.gamma


def fisher_low_eta(params: AtomParams, theta: str = "omega") -> float:
    """Rate-only Fisher information per photon, the eta -> 0 limit.

    When waiting times are exponential the record carries information
    about theta only through the click rate, so
    F/N = (d ln rho_ee^st / d theta)^2.
    """
    if theta not in THETA_NAMES:
        raise ValueError(f"theta must be one of {THETA_NAMES}, got {theta!r}")
    rho = steady_state_ee(params)
    if rho == 0.0:
        raise ValueError("steady-state population is zero; no click rate to vary")
    theta0 = getattr(params, theta)
    h = 1e-6 * max(abs(theta0), params.gamma)
    rho_p = steady_state_ee(_shifted(params, theta, theta0 + h))
    rho_m = steady_state_ee(_shifted(params, theta, theta0 - h))
    dlog = (rho_p - rho_m) / (2.0 * h * rho)
    return float(dlog * dlog)


def crb_sigma(f_per_photon: float, n_photons: float) -> float:
    """Cramer-Rao standard-deviation bound for n_photons detections."""
    if not (np.isfinite(f_per_photon) and f_per_photon > 0):
        raise ValueError(f"f_per_photon must be positive, got {f_per_photon}")
    if not (np.isfinite(n_photons) and n_photons > 0):
        raise ValueError(f"n_photons must be positive, got {n_photons}")
    return 1.0 / np.sqrt(n_photons * f_per_photon)


@dataclass(frozen=True)
class ScanRow:
    """One operating point of a parameter scan.

    Exactly one of ``result`` and ``error`` is set; failed points are
    kept as flagged rows so a scan never silently drops them.
    """

    params: AtomParams
    theta: str
    result: FisherResult | None
    error: str | None

    @property
    def ok(self) -> bool:
        return self.result is not None


def _scan_point(args: tuple[AtomParams, str, float | None, float]) -> ScanRow:
    params, theta, h, mass_target = args
    try:
        res = fisher_per_photon(params, theta=theta, h=h, mass_target=mass_target)
        return ScanRow(params=params, theta=theta, result=res, error=None)
    except (NumericalFailure, ValueError) as exc:
        return ScanRow(params=params, theta=theta, result=None, error=str(exc))


def scan(
    base: AtomParams,
    theta: str = "omega",
    omegas: Sequence[float] | None = None,
    deltas: Sequence[float] | None = None,
    etas: Sequence[float] | None = None,
    h: float | None = None,
    mass_target: float = DEFAULT_MASS_TARGET,
    jobs: int = 1,
) -> list[ScanRow]:
    """Evaluate the Fisher information over a grid of operating points.

    Axes left as None stay at the value in ``base``. The scan walks the
    cartesian product in (omega, delta, eta) order and returns one row
    per point, keeping failures as flagged rows.
    """
    if theta not in THETA_NAMES:
        raise ValueError(f"theta must be one of {THETA_NAMES}, got {theta!r}")
    omega_axis = [base.omega] if omegas is None else list(omegas)
    delta_axis = [base.delta] if deltas is None else list(deltas)
    eta_axis = [base.eta] if etas is None else list(etas)

    points = []
    for om in omega_axis:
        for de in delta_axis:
            for et in eta_axis:
                p = AtomParams(omega=om, delta=de, gamma=base.gamma, eta=et)
                points.append((p, theta, h, mass_target))

    if jobs <= 1 or len(points) <= 1:
        return [_scan_point(a) for a in points]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_scan_point, points))
