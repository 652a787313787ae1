"""Waiting-time distributions w(tau) on uniform tau grids.

The waiting time between consecutive reported clicks has density
w(tau) = eta Gamma rho_ee(tau), with rho_ee the excited population of
the conditional no-jump state started in |g>. On resonance at eta = 1
the closed form of dynamics.analytic_nojump_ee applies; otherwise the
density table is built by integrating the four-ODE no-jump system.

Tables store node values on a uniform grid; integrals are trapezoid.
The truncation budget (probability mass beyond tau_max) is recorded so
downstream consumers can account for it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .params import AtomParams, default_dt

DEFAULT_MASS_TARGET = 1.0 - 1e-10
POINTS_PER_PERIOD = 40


def _check_uniform(tau_grid: np.ndarray) -> float:
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or tau_grid.size < 2:
        raise ValueError("tau_grid must be a 1-d grid with at least 2 points")
    if tau_grid[0] != 0.0:
        raise ValueError("tau_grid must start at 0")
    steps = np.diff(tau_grid)
    dtau = steps[0]
    if dtau <= 0 or not np.allclose(steps, dtau, rtol=1e-6, atol=0.0):
        raise ValueError("tau_grid must be uniform and increasing")
    return float(dtau)


def uniform_grid(dtau: float, tau_max: float) -> np.ndarray:
    """Grid 0, dtau, ..., n dtau with n dtau >= tau_max."""
    if dtau <= 0 or tau_max <= 0:
        raise ValueError(f"need dtau > 0 and tau_max > 0, got {dtau}, {tau_max}")
    n = math.ceil(tau_max / dtau - 1e-12)
    return np.arange(n + 1) * dtau


@dataclass(frozen=True)
class WaitingTimeTable:
    """Tabulated waiting-time density on a uniform grid.

    w carries units of gamma (a rate); mass is the trapezoid integral
    over the grid, so 1 - mass is the truncated tail probability.
    """

    tau_grid: np.ndarray
    w: np.ndarray
    params: AtomParams
    mass: float = field(init=False)

    def __post_init__(self) -> None:
        dtau = _check_uniform(self.tau_grid)
        w = np.asarray(self.w, dtype=float)
        if w.shape != self.tau_grid.shape:
            raise ValueError("w and tau_grid shapes differ")
        if np.any(w < 0):
            raise ValueError("waiting-time density must be non-negative")
        mass = float(np.trapezoid(w, dx=dtau))
        if mass > 1.0 + 1e-9:
            raise ValueError(f"table mass {mass} exceeds 1")
        object.__setattr__(self, "tau_grid", self.tau_grid.copy())
        object.__setattr__(self, "w", w.copy())
        object.__setattr__(self, "mass", mass)
        self.tau_grid.setflags(write=False)
        self.w.setflags(write=False)

    @property
    def dtau(self) -> float:
        return float(self.tau_grid[1] - self.tau_grid[0])

    @property
    def tau_max(self) -> float:
        return float(self.tau_grid[-1])

    @property
    def eps_trunc(self) -> float:
        return max(0.0, 1.0 - self.mass)

    def interp(self, taus) -> np.ndarray:
        """Linear interpolation of w; raises beyond the grid (no clamping)."""
        taus = np.asarray(taus, dtype=float)
        if np.any(taus < 0) or np.any(taus > self.tau_max):
            raise ValueError("waiting time outside table grid")
        return np.interp(taus, self.tau_grid, self.w)

    def survival(self, taus) -> np.ndarray:
        """No-click probability S(tau) = 1 - integral of w up to tau."""
        taus = np.asarray(taus, dtype=float)
        if np.any(taus < 0) or np.any(taus > self.tau_max):
            raise ValueError("time outside table grid")
        cum = np.concatenate(
            [[0.0], np.cumsum((self.w[1:] + self.w[:-1]) * 0.5 * self.dtau)]
        )
        return np.maximum(1.0 - np.interp(taus, self.tau_grid, cum), 0.0)


def wtd_analytic(params: AtomParams, tau_grid) -> WaitingTimeTable:
    """Closed-form table, valid on resonance with perfect detection."""
    if params.delta != 0.0:
        raise ValueError("analytic table requires delta = 0")
    if params.eta != 1.0:
        raise ValueError("analytic table requires eta = 1")
    tau_grid = np.asarray(tau_grid, dtype=float)
    _check_uniform(tau_grid)
    w = params.gamma * dynamics.analytic_nojump_ee(tau_grid, params)
    return WaitingTimeTable(tau_grid, w, params)


def wtd_numeric(params: AtomParams, tau_grid, dt: float | None = None) -> WaitingTimeTable:
    """Numerical table from the no-jump master equation, any delta and eta.

    dt bounds the RK4 substep; the default resolves the fastest rate
    with 1e-3 steps. Substeps divide the grid spacing evenly so nodes
    sit exactly on the step lattice.
    """
    if params.omega == 0.0:
        raise ValueError("omega = 0 emits no photons, waiting-time density undefined")
    tau_grid = np.asarray(tau_grid, dtype=float)
    dtau = _check_uniform(tau_grid)
    if dt is None:
        dt = default_dt(params)
    n_sub = max(1, math.ceil(dtau / dt - 1e-12))
    gen = dynamics.bloch_generator(params.omega, params.delta, params.gamma, params.eta)
    node_step = np.linalg.matrix_power(dynamics.rk4_step_matrix(gen, dtau / n_sub), n_sub)
    states = dynamics.propagate_table(node_step, np.array([1.0, 0.0, 0.0, 0.0]), tau_grid.size - 1)
    w = params.eta * params.gamma * np.maximum(states[:, 1], 0.0)
    return WaitingTimeTable(tau_grid, w, params)


def wtd_tail_rate(params: AtomParams) -> float:
    """Asymptotic exponential rate eta Gamma rho_ee^st (= mean click rate)."""
    return params.eta * params.gamma * dynamics.steady_state_ee(params)


def _slowest_decay_rate(params: AtomParams) -> float:
    gen = dynamics.bloch_generator(params.omega, params.delta, params.gamma, params.eta)
    rates = -np.linalg.eigvals(gen).real
    return float(np.min(rates[rates > 1e-30]))


def _survival_at(params: AtomParams, tau: float) -> float:
    gen = dynamics.bloch_generator(params.omega, params.delta, params.gamma, params.eta)
    y = dynamics.propagate_span(gen, np.array([1.0, 0.0, 0.0, 0.0]), tau, default_dt(params))
    return float(y[0] + y[1])


def choose_grid(
    params: AtomParams,
    mass_target: float = DEFAULT_MASS_TARGET,
    points_per_period: int = POINTS_PER_PERIOD,
) -> np.ndarray:
    """Uniform grid resolving the oscillation and covering the tail.

    dtau starts at points_per_period nodes per period of the fastest
    rate among (omega, |delta|, gamma); tau_max is pushed until the
    no-click survival falls below half of 1 - mass_target. The trapezoid
    mass of the resulting table must itself clear mass_target, which the
    truncation budget alone does not guarantee (quadrature error is
    O(dtau^4) here), so dtau is then halved as needed.
    """
    if not 0.0 < mass_target < 1.0:
        raise ValueError(f"mass_target must be in (0, 1), got {mass_target}")
    if params.omega == 0.0:
        raise ValueError("omega = 0 emits no photons, no grid to choose")
    rate = max(params.omega, abs(params.delta), params.gamma)
    dtau = 2.0 * math.pi / rate / points_per_period
    survival_budget = 0.5 * (1.0 - mass_target)
    slow = _slowest_decay_rate(params)
    tau_max = 10.0 / params.gamma - math.log(survival_budget) / slow
    for _ in range(64):
        if _survival_at(params, tau_max) < survival_budget:
            break
        tau_max *= 1.5
    else:
        raise RuntimeError("grid extension failed to reach mass target")
    for _ in range(12):
        grid = uniform_grid(dtau, tau_max)
        if wtd_numeric(params, grid).mass >= mass_target:
            return grid
        dtau /= 2.0
    raise RuntimeError("grid refinement failed to reach mass target")


def interp_points_per_period(rel_err: float = 1e-6) -> int:
    """Grid density needed for linear interpolation of w to rel_err.

    The curvature scale of w is (2 lambda)^2 <= omega^2 at the density
    scale, so the midpoint error (dtau^2/8) w'' stays below rel_err of
    the peak once (2 pi / ppp)^2 / 8 <= rel_err.
    """
    return math.ceil(2.0 * math.pi / math.sqrt(8.0 * rel_err))


# ---------------------------------------------------------------- file io


def table_meta(table: WaitingTimeTable) -> dict:
    p = table.params
    return {
        "omega": p.omega,
        "delta": p.delta,
        "gamma": p.gamma,
        "eta": p.eta,
        "dtau": table.dtau,
        "tau_max": table.tau_max,
        "mass": table.mass,
        "eps_trunc": table.eps_trunc,
        "tail_rate": wtd_tail_rate(p),
    }


def write_table_csv(path, table: WaitingTimeTable, extra_meta: dict | None = None) -> None:
    meta = dict(extra_meta or {})
    meta.update(table_meta(table))
    with open(path, "w") as fh:
        fh.write("# json: " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("tau,w\n")
        for tau, w in zip(table.tau_grid, table.w):
            fh.write(f"{float(tau)!r},{float(w)!r}\n")


def write_table_json(path, table: WaitingTimeTable, extra_meta: dict | None = None) -> None:
    meta = dict(extra_meta or {})
    meta.update(table_meta(table))
    payload = {"meta": meta, "tau": table.tau_grid.tolist(), "w": table.w.tolist()}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
