"""Scikit-learn style front ends for the two estimation routes.

Both classes follow the estimator protocol: constructor arguments are
stored verbatim, fit(record) does the work and exposes results as
trailing-underscore attributes, and get_params/set_params come from
BaseEstimator, so grid searches and pipelines over estimator settings
work the usual way. The underlying routines live in bayes and linear;
these wrappers add no numerics.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import bayes, linear
from .records import ClickRecord


class GridFilter(BaseEstimator):
    """Posterior over a fixed candidate grid from a detection record.

    route="intervals" scores candidates with the exact waiting-time
    likelihood; route="stepped" runs the dt-stepped filter (eta = 1
    records only) with the given time step.
    """

    def __init__(
        self,
        candidates=None,
        theta_name: str = "omega",
        prior=None,
        route: str = "intervals",
        dt: float = 1e-2,
        include_survival: bool = True,
    ):
        self.candidates = candidates
        self.theta_name = theta_name
        self.prior = prior
        self.route = route
        self.dt = dt
        self.include_survival = include_survival

    def fit(self, record: ClickRecord, y=None):
        if self.candidates is None:
            raise ValueError("candidates must be set before fit")
        if self.route == "intervals":
            grid = bayes.loglik_record(
                record,
                self.theta_name,
                self.candidates,
                prior=self.prior,
                include_survival=self.include_survival,
            )
        elif self.route == "stepped":
            grid = bayes.run_record_dt(
                record, self.theta_name, self.candidates, self.dt, prior=self.prior
            )
        else:
            raise ValueError(f"route must be 'intervals' or 'stepped', got {self.route!r}")
        self.grid_ = grid
        self.log_weights_ = grid.log_weights.copy()
        self.posterior_ = bayes.posterior(grid)
        self.theta_ = float(grid.candidates[int(np.argmax(self.posterior_))])
        return self

    def predict(self, record: ClickRecord | None = None) -> float:
        """Posterior-mode candidate of the fitted grid."""
        if record is not None:
            self.fit(record)
        return self.theta_


class LinearWaitingTimeEstimator(BaseEstimator):
    """Iterative linear correction estimator over binned waiting times.

    fit(record) runs the gain-rebuild schedule and exposes the full
    (N, theta, sigma) trace; theta_ and sigma_ are its final row.
    """

    def __init__(
        self,
        theta_name: str = "omega",
        theta0: float | None = None,
        schedule=None,
        mle_window: int = linear.MLE_WINDOW,
        trust_fraction: float = linear.TRUST_FRACTION,
        h: float | None = None,
        points_per_period: int | None = None,
    ):
        self.theta_name = theta_name
        self.theta0 = theta0
        self.schedule = schedule
        self.mle_window = mle_window
        self.trust_fraction = trust_fraction
        self.h = h
        self.points_per_period = points_per_period

    def fit(self, record: ClickRecord, y=None):
        trace = linear.estimate_trace(
            record,
            theta_name=self.theta_name,
            theta0=self.theta0,
            schedule=self.schedule,
            mle_window=self.mle_window,
            trust_fraction=self.trust_fraction,
            h=self.h,
            points_per_period=self.points_per_period,
        )
        self.trace_ = trace
        self.theta_ = trace[-1].theta_hat
        self.sigma_ = trace[-1].sigma
        self.n_used_ = trace[-1].n_used
        return self

    def predict(self, record: ClickRecord | None = None) -> float:
        if record is not None:
            self.fit(record)
        return self.theta_
