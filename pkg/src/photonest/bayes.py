"""Bayesian parameter inference on photon-counting records.

Two likelihood routes share one grid of candidate parameter values. The
dt-stepped filter advances an un-normalized conditional state per
candidate across the record's time lattice, multiplying in the
measurement probability of each bin (click or no click); its snapping
of click times to the lattice biases the log-likelihood by O(dt) per
click, which vanishes linearly as dt shrinks. The waiting-time route
evaluates the interval density at the observed waiting times by linear
interpolation on a dense precomputed table and has no time-step bias,
so it is the default for estimation work; the record's trailing open
interval enters as a survival factor unless disabled.

Candidates that assign an event zero probability get log-weight -inf
and zero posterior mass, never an error. All theta-independent factors
(the Gamma dt at a click, dropped table normalizations) cancel in the
max-subtracted softmax that forms the posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .params import AtomParams, PureState
from .records import ClickRecord, WaitingTimes, waiting_times
from .wtd import (
    WaitingTimeTable,
    choose_grid,
    interp_points_per_period,
    uniform_grid,
    wtd_numeric,
)

# Log-weights are shifted by their maximum whenever one falls below this,
# keeping exp() away from underflow without touching posterior ratios.
RENORM_THRESHOLD = -700.0

# Conditional states are rescaled below this squared norm; no-click
# weight increments are norm ratios, so rescaling is exactly free.
STATE_NORM_FLOOR = 1e-30

# Linear interpolation of w on the default table resolves the density
# to this relative error at its peak scale.
INTERP_REL_ERR = 1e-6


@dataclass
class LikelihoodGrid:
    """Accumulated log-likelihoods over candidate values of one parameter.

    ``amplitudes`` holds the per-candidate un-normalized conditional
    state (rows of (c_g, c_e)) and exists only for dt-stepped grids;
    waiting-time grids carry the final weights alone.
    """

    theta_name: str
    candidates: np.ndarray
    log_weights: np.ndarray
    base: AtomParams
    amplitudes: np.ndarray | None = None
    t_now: float = 0.0
    _step_cache: dict = field(default_factory=dict, repr=False)

    def candidate_params(self) -> list[AtomParams]:
        return [self.base.with_value(self.theta_name, float(c)) for c in self.candidates]

    def pure_states(self) -> list[PureState]:
        if self.amplitudes is None:
            raise ValueError("grid was not built by dt stepping; no states tracked")
        return [PureState(complex(a[0]), complex(a[1])) for a in self.amplitudes]

    def posterior(self) -> np.ndarray:
        return posterior(self)


def init_grid(
    base: AtomParams,
    theta_name: str,
    candidates,
    prior=None,
    track_states: bool = True,
) -> LikelihoodGrid:
    """Fresh grid with log-prior weights and every state in the ground state."""
    cand = np.asarray(candidates, dtype=float)
    if cand.ndim != 1 or cand.size == 0:
        raise ValueError("candidates must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(cand)):
        raise ValueError("candidates must be finite")
    if prior is None:
        prior = np.full(cand.size, 1.0 / cand.size)
    prior = np.asarray(prior, dtype=float)
    if prior.shape != cand.shape:
        raise ValueError("prior and candidates must have the same length")
    if np.any(prior <= 0):
        raise ValueError("prior entries must be positive")
    if abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError(f"prior must sum to 1, got {prior.sum()}")

    grid = LikelihoodGrid(
        theta_name=theta_name,
        candidates=cand,
        log_weights=np.log(prior),
        base=base,
    )
    grid.candidate_params()  # validates every candidate value
    if track_states:
        amps = np.zeros((cand.size, 2), dtype=complex)
        amps[:, 0] = 1.0
        grid.amplitudes = amps
    return grid


def _bin_step_matrices(grid: LikelihoodGrid, dt: float) -> np.ndarray:
    """Per-candidate no-jump propagators over one bin, cached by dt.

    Substeps mirror nojump_propagate_pure so a binned run and a
    state-by-state run agree bit for bit.
    """
    steps = grid._step_cache.get(dt)
    if steps is None:
        steps = np.empty((grid.candidates.size, 2, 2), dtype=complex)
        for k, p in enumerate(grid.candidate_params()):
            gen = dynamics.pure_generator(p.omega, p.delta, p.gamma)
            n_sub = max(1, math.ceil(dt / dynamics.default_dt(p)))
            steps[k] = np.linalg.matrix_power(
                dynamics.rk4_step_matrix(gen, dt / n_sub), n_sub
            )
        grid._step_cache[dt] = steps
    return steps


def _renorm_weights(grid: LikelihoodGrid) -> None:
    lw = grid.log_weights
    finite = np.isfinite(lw)
    if finite.any() and np.any(lw[finite] < RENORM_THRESHOLD):
        grid.log_weights = lw - np.max(lw[finite])


def step_dt(grid: LikelihoodGrid, click: bool, dt: float) -> LikelihoodGrid:
    """Advance the filter by one bin of width dt.

    A no-click bin propagates every candidate state and adds the log of
    its squared-norm ratio. A click multiplies in the excited-state
    population of the normalized state (the Gamma dt factor is the same
    for every candidate and is dropped) and resets the state to ground;
    the clock does not advance, the caller's binning owns the time axis.
    """
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if grid.amplitudes is None:
        raise ValueError("grid was not built for dt stepping")
    if grid.base.eta != 1.0:
        raise ValueError(
            "dt stepping tracks pure states, which is exact only for eta = 1; "
            "use the waiting-time likelihood for partial detection"
        )

    amps = grid.amplitudes
    norms = np.einsum("ki,ki->k", amps, amps.conj()).real
    if click:
        ce2 = (amps[:, 1] * amps[:, 1].conj()).real
        p_click = grid.base.gamma * dt * ce2 / norms
        if np.any(p_click >= 1.0):
            raise ValueError(
                f"dt = {dt} assigns click probability >= 1 to a candidate; "
                "shrink the step"
            )
        with np.errstate(divide="ignore"):
            grid.log_weights = grid.log_weights + np.log(ce2 / norms)
        amps[:, 0] = 1.0
        amps[:, 1] = 0.0
    else:
        new = np.einsum("kij,kj->ki", _bin_step_matrices(grid, dt), amps)
        new_norms = np.einsum("ki,ki->k", new, new.conj()).real
        grid.log_weights = grid.log_weights + np.log(new_norms / norms)
        small = new_norms < STATE_NORM_FLOOR
        if np.any(small):
            new[small] /= np.sqrt(new_norms[small])[:, None]
        grid.amplitudes = new
        grid.t_now += dt
    _renorm_weights(grid)
    return grid


def run_record_dt(
    record: ClickRecord,
    theta_name: str,
    candidates,
    dt: float,
    prior=None,
    trace_every: int = 0,
) -> LikelihoodGrid | tuple[LikelihoodGrid, np.ndarray]:
    """Run the dt-stepped filter across a whole record.

    Clicks are processed in the bin containing them, before the bin's
    no-click propagation. With trace_every = m > 0, also returns rows
    (t, posterior...) sampled every m bins (plus start and end) for
    posterior-versus-time output.
    """
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    grid = init_grid(record.params, theta_name, candidates, prior)
    times = record.times
    duration = record.duration
    n_full = int(np.floor(duration / dt + 1e-12))
    remainder = duration - n_full * dt

    rows = []
    if trace_every > 0:
        rows.append((0.0, *posterior(grid)))

    idx = 0
    for k in range(n_full):
        hi = (k + 1) * dt
        while idx < times.size and times[idx] < hi:
            step_dt(grid, True, dt)
            idx += 1
        step_dt(grid, False, dt)
        if trace_every > 0 and (k + 1) % trace_every == 0:
            rows.append((grid.t_now, *posterior(grid)))
    while idx < times.size:  # clicks in the final partial bin (or at T)
        step_dt(grid, True, dt)
        idx += 1
    if remainder > 1e-12 * max(duration, dt):
        step_dt(grid, False, remainder)
    if trace_every > 0:
        rows.append((grid.t_now, *posterior(grid)))
        return grid, np.asarray(rows)
    return grid


# ------------------------------------------------------- waiting-time route


def _table_for(
    params: AtomParams,
    cover: float,
    points_per_period: int,
    tau_grid: np.ndarray | None,
) -> WaitingTimeTable:
    """Density table reaching at least tau = cover, extending if needed."""
    if tau_grid is None:
        tau_grid = choose_grid(params, points_per_period=points_per_period)
    if cover > tau_grid[-1]:
        dtau = tau_grid[1] - tau_grid[0]
        tau_grid = uniform_grid(dtau, 1.02 * cover)
    return wtd_numeric(params, tau_grid)


def candidate_tables(
    base: AtomParams,
    theta_name: str,
    candidates,
    cover: float = 0.0,
    points_per_period: int | None = None,
    tau_grid: np.ndarray | None = None,
) -> list[WaitingTimeTable]:
    """Interpolation-grade density tables for each candidate value.

    Useful for reusing tables across many records; loglik_waiting_times
    accepts them and extends any table too short for its data.
    """
    if points_per_period is None:
        points_per_period = interp_points_per_period(INTERP_REL_ERR)
    return [
        _table_for(base.with_value(theta_name, float(c)), cover, points_per_period, tau_grid)
        for c in np.asarray(candidates, dtype=float)
    ]


def loglik_waiting_times(
    taus,
    base: AtomParams,
    theta_name: str,
    candidates,
    prior=None,
    open_interval: float = 0.0,
    include_survival: bool = True,
    tables: list[WaitingTimeTable] | None = None,
    points_per_period: int | None = None,
    tau_grid: np.ndarray | None = None,
) -> LikelihoodGrid:
    """Exact record log-likelihood from the waiting-time density.

    Sums log w(tau_i; theta) over the observed intervals, interpolating
    linearly on a table dense enough that interpolation error is below
    INTERP_REL_ERR at the density scale. A waiting time beyond a
    table's reach extends that table and recomputes, never clamps. The
    trailing open interval (time from the last click to the end of the
    record) contributes its no-click survival probability unless
    include_survival is False; an empty record is pure survival.
    """
    if isinstance(taus, WaitingTimes):
        taus = taus.taus
    taus = np.asarray(taus, dtype=float)
    if taus.size and np.any(taus <= 0):
        raise ValueError("waiting times must be > 0")
    if not (np.isfinite(open_interval) and open_interval >= 0):
        raise ValueError(f"open interval must be >= 0, got {open_interval}")
    if points_per_period is None:
        points_per_period = interp_points_per_period(INTERP_REL_ERR)

    grid = init_grid(base, theta_name, candidates, prior, track_states=False)
    cover = float(max(taus.max() if taus.size else 0.0, open_interval))
    cand_params = grid.candidate_params()
    if tables is None:
        tables = [None] * len(cand_params)
    elif len(tables) != len(cand_params):
        raise ValueError("tables and candidates must have the same length")

    logl = np.zeros(len(cand_params))
    for k, p in enumerate(cand_params):
        table = tables[k]
        if table is None or cover > table.tau_max:
            table = _table_for(p, cover, points_per_period, tau_grid)
        with np.errstate(divide="ignore"):
            if taus.size:
                logl[k] += float(np.sum(np.log(table.interp(taus))))
            if include_survival and open_interval > 0:
                logl[k] += float(np.log(table.survival(open_interval)))
    grid.log_weights = grid.log_weights + logl
    grid.t_now = float(taus.sum() + open_interval)
    _renorm_weights(grid)
    return grid


def loglik_record(
    record: ClickRecord,
    theta_name: str,
    candidates,
    prior=None,
    include_survival: bool = True,
    tables: list[WaitingTimeTable] | None = None,
    points_per_period: int | None = None,
) -> LikelihoodGrid:
    """Waiting-time log-likelihood of a full record, open interval included."""
    taus = waiting_times(record)
    last = float(record.times[-1]) if record.n_clicks else 0.0
    return loglik_waiting_times(
        taus,
        record.params,
        theta_name,
        candidates,
        prior=prior,
        open_interval=record.duration - last,
        include_survival=include_survival,
        tables=tables,
        points_per_period=points_per_period,
    )


def posterior(grid: LikelihoodGrid) -> np.ndarray:
    """Normalized posterior over the candidates (max-subtracted softmax)."""
    lw = grid.log_weights
    finite = np.isfinite(lw)
    if not finite.any():
        raise ValueError("every candidate has zero likelihood")
    p = np.exp(lw - np.max(lw[finite]))
    p[~finite] = 0.0
    return p / p.sum()
