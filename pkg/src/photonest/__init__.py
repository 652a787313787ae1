"""Photon-counting parameter estimation for a driven two-level emitter."""

from .bayes import (
    LikelihoodGrid,
    candidate_tables,
    init_grid,
    loglik_record,
    loglik_waiting_times,
    posterior,
    run_record_dt,
    step_dt,
)
from .errors import NumericalFailure
from .estimators import GridFilter, LinearWaitingTimeEstimator
from .fisher import (
    FisherResult,
    ScanRow,
    crb_sigma,
    fisher_analytic_rabi,
    fisher_analytic_rabi_per_time,
    fisher_low_eta,
    fisher_per_photon,
    scan,
)
from .linear import (
    EstimateStep,
    GainFunction,
    WaitingHistogram,
    build_gain,
    density_and_slope,
    estimate_trace,
    histogram_waiting_times,
    linear_estimate,
    linear_estimate_relative,
    mle_init,
)
from .params import AtomParams, DensityMatrix, PureState
from .records import (
    ClickRecord,
    WaitingTimes,
    read_record,
    simulate_record,
    thin_record,
    waiting_times,
    write_record_csv,
    write_record_json,
)
from .wtd import (
    WaitingTimeTable,
    choose_grid,
    uniform_grid,
    wtd_analytic,
    wtd_numeric,
)

__version__ = "0.1.0"

__all__ = [
    "AtomParams",
    "ClickRecord",
    "DensityMatrix",
    "EstimateStep",
    "FisherResult",
    "GainFunction",
    "GridFilter",
    "LikelihoodGrid",
    "LinearWaitingTimeEstimator",
    "NumericalFailure",
    "PureState",
    "ScanRow",
    "WaitingHistogram",
    "WaitingTimeTable",
    "WaitingTimes",
    "build_gain",
    "candidate_tables",
    "choose_grid",
    "crb_sigma",
    "density_and_slope",
    "estimate_trace",
    "fisher_analytic_rabi",
    "fisher_analytic_rabi_per_time",
    "fisher_low_eta",
    "fisher_per_photon",
    "histogram_waiting_times",
    "init_grid",
    "linear_estimate",
    "linear_estimate_relative",
    "loglik_record",
    "loglik_waiting_times",
    "mle_init",
    "posterior",
    "read_record",
    "run_record_dt",
    "scan",
    "simulate_record",
    "step_dt",
    "thin_record",
    "uniform_grid",
    "waiting_times",
    "write_record_csv",
    "write_record_json",
    "wtd_analytic",
    "wtd_numeric",
    "__version__",
]
