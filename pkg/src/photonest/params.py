"""Domain types for the driven two-level emitter.

Conventions used throughout the package:

* the decay rate Gamma sets the time unit, so rates are quoted in units of
  Gamma and times in units of 1/Gamma (gamma itself is carried along so the
  CLI can rescale outputs to dimensional units),
* the rotating-frame Hamiltonian has H_0(e,e) = -delta, off-diagonals
  Omega/2, and the non-hermitian no-jump Hamiltonian adds -i Gamma/2 on the
  excited diagonal,
* basis ordering is (|g>, |e>).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class AtomParams:
    """Physical parameters of the laser-driven emitter.

    omega : Rabi frequency, same inverse-time unit as gamma, >= 0
    delta : laser-atom detuning, same unit as gamma
    gamma : spontaneous decay rate, sets the time unit, > 0 (1 by convention)
    eta   : detector efficiency, 0 < eta <= 1
    """

    omega: float
    delta: float = 0.0
    gamma: float = 1.0
    eta: float = 1.0

    def __post_init__(self) -> None:
        for name in ("omega", "delta", "gamma", "eta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")

    def with_eta(self, eta: float) -> "AtomParams":
        return replace(self, eta=eta)

    def with_value(self, name: str, value: float) -> "AtomParams":
        """Return a copy with one named parameter replaced (theta selectors)."""
        if name not in ("omega", "delta", "gamma", "eta"):
            raise ValueError(f"unknown parameter {name!r}")
        return replace(self, **{name: value})


# un-normalized states occur during no-jump evolution; allow a little headroom
NORM_TOL = 1e-9


@dataclass(frozen=True)
class PureState:
    """Two-level state amplitudes (c_g, c_e), possibly un-normalized."""

    c_g: complex
    c_e: complex

    @property
    def norm_sq(self) -> float:
        return abs(self.c_g) ** 2 + abs(self.c_e) ** 2

    def __post_init__(self) -> None:
        n = self.norm_sq
        if not (0.0 <= n <= 1.0 + NORM_TOL):
            raise ValueError(f"squared norm {n} outside [0, 1]")

    @staticmethod
    def ground() -> "PureState":
        return PureState(1.0 + 0.0j, 0.0 + 0.0j)


@dataclass(frozen=True)
class DensityMatrix:
    """Two-level density matrix, rho_eg implied by hermiticity.

    Un-normalized (trace <= 1) matrices are allowed: the conditional no-jump
    state decays in trace at rate eta * Gamma * rho_ee.
    """

    rho_gg: float
    rho_ee: float
    rho_ge: complex = 0.0 + 0.0j

    @property
    def trace(self) -> float:
        return self.rho_gg + self.rho_ee

    def __post_init__(self) -> None:
        if self.rho_gg < -NORM_TOL or self.rho_ee < -NORM_TOL:
            raise ValueError("negative population")
        if not (0.0 <= self.trace <= 1.0 + NORM_TOL):
            raise ValueError(f"trace {self.trace} outside [0, 1]")
        if abs(self.rho_ge) ** 2 > self.rho_gg * self.rho_ee + NORM_TOL:
            raise ValueError("coherence violates positivity")

    @staticmethod
    def ground() -> "DensityMatrix":
        return DensityMatrix(1.0, 0.0, 0.0 + 0.0j)


def default_dt(params: AtomParams) -> float:
    """Default integrator step, 1e-3 over the fastest rate (units of 1/Gamma)."""
    return 1e-3 / max(params.omega, abs(params.delta), params.gamma)
