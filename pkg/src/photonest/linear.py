"""Linear near-optimal estimation from binned waiting times.

The estimator expands the waiting-time density around a prior parameter
value theta and corrects it by a weighted count of the observed
intervals: delta_theta = sum_j g(tau_j) n_j + C. The gain g is
proportional to the logarithmic slope of the density in theta, scaled
so that a data set drawn exactly from the prior density gives zero
correction and the estimator's variance meets the Cramer-Rao bound of
the binned record. Iterating gain construction at the running estimate
over a growing click budget turns the one-shot correction into an
estimate-versus-N trace.

Bins follow the density table's own grid, so no rebinning ever happens
between the gain and the histogram. Bins where the density is below
w_floor (the neighborhoods of its zeros at perfect detection) get zero
gain and are excluded from the offset; they carry negligible expected
counts, and the log-slope there is not usable pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import loglik_waiting_times
from .dynamics import steady_state_ee
from .errors import NumericalFailure
from .fisher import DEFAULT_H_SCALE, THETA_NAMES
from .params import AtomParams
from .records import ClickRecord, waiting_times
from .wtd import WaitingTimeTable, _check_uniform, choose_grid, uniform_grid, wtd_numeric

# Bins with density below this fraction of the peak get zero gain.
W_FLOOR_FRAC = 1e-9

# Fig.-5-style default schedule: logarithmic click budgets, 100 to 10^4.
SCHEDULE_START = 100
SCHEDULE_POINTS = 9

# Grid-likelihood initialization from the leading clicks of the record.
MLE_WINDOW = 100
MLE_POINTS = 161
MLE_SPAN = 4.0
MLE_POINTS_PER_PERIOD = 200

# One update may move the estimate by at most this fraction of itself;
# larger steps mean the linear expansion cannot be trusted.
TRUST_FRACTION = 0.1


@dataclass(frozen=True)
class WaitingHistogram:
    """Counts of waiting times on a uniform bin partition of [0, tau_max]."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=float)
        _check_uniform(edges)
        counts = np.asarray(self.counts)
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("counts must be integers")
        if counts.shape != (edges.size - 1,):
            raise ValueError("counts must have one entry per bin")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges.copy())
        object.__setattr__(self, "counts", counts.copy())
        self.bin_edges.setflags(write=False)
        self.counts.setflags(write=False)

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())

    @property
    def dtau(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])


def histogram_waiting_times(taus, bin_edges) -> WaitingHistogram:
    """Bin waiting times on the given edges; out-of-range data is an error."""
    taus = np.asarray(taus, dtype=float)
    edges = np.asarray(bin_edges, dtype=float)
    if taus.size and (taus.min() < edges[0] or taus.max() > edges[-1]):
        raise ValueError(
            f"waiting times reach {taus.max():g}, beyond the bin range "
            f"[{edges[0]:g}, {edges[-1]:g}]; rebuild the gain on a longer grid"
        )
    counts, _ = np.histogram(taus, bins=edges)
    return WaitingHistogram(edges, counts)


@dataclass(frozen=True)
class GainFunction:
    """Per-bin gain, offset, and the tables they were built from.

    g[j] applies to the bin [tau_grid[j], tau_grid[j+1]); w and dw_dtheta
    hold the density and its theta-slope at the bin midpoints. f_pp is
    the discrete per-click information of the included bins, the exact
    inverse-variance scale of this estimator on its own binning.
    """

    tau_grid: np.ndarray
    g: np.ndarray
    C: float
    theta_prior: float
    n_ref: int
    w: np.ndarray
    dw_dtheta: np.ndarray
    f_pp: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("tau_grid", "g", "w", "dw_dtheta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr.copy())
            getattr(self, name).setflags(write=False)
        _check_uniform(self.tau_grid)
        if self.g.shape != (self.tau_grid.size - 1,):
            raise ValueError("g must have one entry per bin")
        dtau = self.tau_grid[1] - self.tau_grid[0]
        residual = self.n_ref * np.sum(self.g * self.w * dtau) + self.C
        scale = max(abs(self.C), 1.0)
        if abs(residual) > 1e-10 * scale:
            raise ValueError(
                f"gain violates the zero-mean identity: residual {residual:g}"
            )


def density_and_slope(
    params: AtomParams,
    theta: str = "omega",
    h: float | None = None,
    cover: float = 0.0,
    points_per_period: int | None = None,
    tau_grid: np.ndarray | None = None,
) -> tuple[WaitingTimeTable, np.ndarray]:
    """Waiting-time table and its theta-derivative on one shared grid.

    The derivative is a central difference with the Fisher module's
    default step; w itself is smooth in theta (no kinks, unlike its
    square root), so plain differencing is accurate everywhere.
    """
    if theta not in THETA_NAMES:
        raise ValueError(f"theta must be one of {THETA_NAMES}, got {theta!r}")
    if h is None:
        h = DEFAULT_H_SCALE * max(abs(getattr(params, theta)), params.gamma)
    if tau_grid is None:
        if points_per_period is None:
            tau_grid = choose_grid(params)
        else:
            tau_grid = choose_grid(params, points_per_period=points_per_period)
    if cover > tau_grid[-1]:
        tau_grid = uniform_grid(tau_grid[1] - tau_grid[0], 1.02 * cover)
    theta0 = getattr(params, theta)
    table = wtd_numeric(params, tau_grid)
    w_p = wtd_numeric(params.with_value(theta, theta0 + h), tau_grid).w
    w_m = wtd_numeric(params.with_value(theta, theta0 - h), tau_grid).w
    return table, (w_p - w_m) / (2.0 * h)


def build_gain(wtd: WaitingTimeTable, dw_dtheta, n_ref: int, theta_prior: float | None = None) -> GainFunction:
    """Gain and offset for a one-shot linear correction at theta_prior.

    g = beta (dw/dtheta) / (2 w) per included bin with
    beta = 2 / (n_ref f_pp), where f_pp is the discrete information sum
    of the same bins; the offset C makes the expected correction vanish
    on data drawn at theta_prior.
    """
    if n_ref < 1:
        raise ValueError(f"n_ref must be >= 1, got {n_ref}")
    dw = np.asarray(dw_dtheta, dtype=float)
    if dw.shape != wtd.tau_grid.shape:
        raise ValueError("dw_dtheta must live on the table grid")
    dtau = wtd.dtau

    # midpoint values: bounded gain even in bins straddling a density
    # zero, and the binned expectation matches the continuum to dtau^2
    w = 0.5 * (wtd.w[:-1] + wtd.w[1:])
    dw = 0.5 * (dw[:-1] + dw[1:])
    keep = w >= W_FLOOR_FRAC * wtd.w.max()
    f_pp = float(np.sum(np.where(keep, dw * dw / np.where(keep, w, 1.0), 0.0)) * dtau)
    if not (np.isfinite(f_pp) and f_pp > 0):
        raise ValueError(
            "density slope carries no information about theta on this grid"
        )
    beta = 2.0 / (n_ref * f_pp)
    g = np.where(keep, beta * dw / (2.0 * np.where(keep, w, 1.0)), 0.0)
    C = -n_ref * float(np.sum(g * w * dtau))
    if theta_prior is None:
        theta_prior = wtd.params.omega
    return GainFunction(
        tau_grid=wtd.tau_grid,
        g=g,
        C=C,
        theta_prior=float(theta_prior),
        n_ref=int(n_ref),
        w=w,
        dw_dtheta=dw,
        f_pp=f_pp,
        beta=beta,
    )


def linear_estimate(hist: WaitingHistogram, gain: GainFunction) -> float:
    """Correction delta_theta = sum_j g_j counts_j + C.

    The histogram must sit on the gain's own grid; rebinning is never
    done silently. The equivalent relative-deviation form (the n/(N w)
    - 1 weighting) is exposed as linear_estimate_relative and agrees to
    rounding.
    """
    if hist.bin_edges.size != gain.tau_grid.size or not np.allclose(
        hist.bin_edges, gain.tau_grid, rtol=0.0, atol=1e-12 * gain.tau_grid[-1]
    ):
        raise ValueError("histogram bins do not match the gain grid")
    return float(np.sum(gain.g * hist.counts) + gain.C)


def linear_estimate_relative(hist: WaitingHistogram, gain: GainFunction) -> float:
    """Same correction written as a relative-deviation quadrature.

    delta_theta = (1/f_pp) sum_j (dw_j dtau) (n_j / (N w_j dtau) - 1)
    over the included bins, with N = n_ref.
    """
    if hist.bin_edges.size != gain.tau_grid.size or not np.allclose(
        hist.bin_edges, gain.tau_grid, rtol=0.0, atol=1e-12 * gain.tau_grid[-1]
    ):
        raise ValueError("histogram bins do not match the gain grid")
    keep = gain.g != 0.0
    w = gain.w[keep]
    dw = gain.dw_dtheta[keep]
    n = hist.counts[keep]
    dtau = gain.tau_grid[1] - gain.tau_grid[0]
    rel = n / (gain.n_ref * w * dtau) - 1.0
    return float(np.sum(dw * dtau * rel) / gain.f_pp)


@dataclass(frozen=True)
class EstimateStep:
    """One point of the estimate-versus-click-budget trace."""

    n_used: int
    theta_hat: float
    sigma: float


def default_schedule(n_total: int) -> list[int]:
    """Logarithmic click budgets from SCHEDULE_START up to n_total."""
    if n_total <= SCHEDULE_START:
        return [n_total]
    grid = np.logspace(np.log10(SCHEDULE_START), np.log10(n_total), SCHEDULE_POINTS)
    return sorted(set(int(round(x)) for x in grid))


def _rate_matched_omega(record: ClickRecord) -> float:
    """Drive strength whose steady click rate matches the record's.

    Near saturation the inversion amplifies rate noise badly, so the
    result is only a rough center for the likelihood search, never an
    estimate by itself.
    """
    p = record.params
    rate = record.n_clicks / record.duration
    rho = rate / (p.eta * p.gamma)
    rho = min(max(rho, 1e-4), 0.499)  # invertible branch of the saturation curve
    return float(np.sqrt((p.delta**2 + p.gamma**2 / 4.0) / (0.25 / rho - 0.5)))


def _window_argmax(taus, params, theta_name, grid_values) -> tuple[int, float]:
    grid_values = np.asarray(grid_values, dtype=float)
    # tables only need to reach the window's longest interval
    rate = max(np.abs(grid_values).max(), abs(params.delta), params.gamma)
    dtau = 2.0 * np.pi / rate / MLE_POINTS_PER_PERIOD
    grid = loglik_waiting_times(
        taus,
        params,
        theta_name,
        grid_values,
        include_survival=False,
        points_per_period=MLE_POINTS_PER_PERIOD,
        tau_grid=uniform_grid(dtau, float(taus.max())),
    )
    k = int(np.argmax(grid.log_weights))
    return k, float(grid.candidates[k])


def mle_init(
    record: ClickRecord,
    theta_name: str = "omega",
    window: int = MLE_WINDOW,
    grid_values=None,
) -> float:
    """Initial estimate: grid-likelihood argmax on the leading clicks.

    The default search grid is logarithmic over a factor MLE_SPAN each
    way around a click-rate-matched center; when the argmax lands at a
    grid edge the search recenters there and repeats, so a poor center
    (the rate carries little information near saturation) still
    converges onto the likelihood peak.
    """
    taus = waiting_times(record).taus
    if taus.size == 0:
        raise ValueError("record has no clicks")
    taus = taus[: max(1, window)]
    if grid_values is not None:
        return _window_argmax(taus, record.params, theta_name, grid_values)[1]
    if theta_name == "omega":
        center = _rate_matched_omega(record)
    else:
        center = max(abs(record.params.delta), record.params.omega)
    for _ in range(4):
        values = np.geomspace(center / MLE_SPAN, center * MLE_SPAN, MLE_POINTS)
        k, best = _window_argmax(taus, record.params, theta_name, values)
        if 2 <= k <= values.size - 3:
            return best
        center = best
    return best


def estimate_trace(
    record: ClickRecord,
    theta_name: str = "omega",
    theta0: float | None = None,
    schedule=None,
    mle_window: int = MLE_WINDOW,
    mle_grid=None,
    trust_fraction: float = TRUST_FRACTION,
    h: float | None = None,
    points_per_period: int | None = None,
) -> list[EstimateStep]:
    """Iterative linear estimation over a growing click budget.

    For each budget N in the schedule the gain is rebuilt at the running
    estimate, applied to the first N waiting times, and the estimate
    updated by the correction. theta0 = None starts from a
    grid-likelihood fit of the first mle_window clicks. An update
    beyond trust_fraction of the current estimate raises
    NumericalFailure: the linear expansion is not valid there.
    """
    taus = waiting_times(record).taus
    if taus.size == 0:
        raise ValueError("record has no clicks")
    if schedule is None:
        schedule = default_schedule(taus.size)
    schedule = sorted(set(int(n) for n in schedule))
    if schedule[0] < 1 or schedule[-1] > taus.size:
        raise ValueError(
            f"schedule must stay within [1, {taus.size}], got {schedule[0]}..{schedule[-1]}"
        )
    theta = float(theta0) if theta0 is not None else mle_init(
        record, theta_name, mle_window, mle_grid
    )

    steps = []
    for n in schedule:
        sub = taus[:n]
        params = record.params.with_value(theta_name, theta)
        table, dw = density_and_slope(
            params,
            theta_name,
            h=h,
            cover=float(sub.max()),
            points_per_period=points_per_period,
        )
        gain = build_gain(table, dw, n, theta_prior=theta)
        hist = histogram_waiting_times(sub, gain.tau_grid)
        dtheta = linear_estimate(hist, gain)
        if abs(dtheta) > trust_fraction * abs(theta):
            raise NumericalFailure(
                f"update {dtheta:g} at N={n} leaves the trust region of "
                f"theta={theta:g}; the linear expansion does not hold"
            )
        theta += dtheta
        steps.append(EstimateStep(n, theta, float(1.0 / np.sqrt(n * gain.f_pp))))
    return steps
