"""No-jump dynamics of the driven two-level atom.

Between detector clicks the conditional state follows a linear,
time-independent ODE: the pure state evolves under the non-hermitian
H_eff = H_0 - i(Gamma/2)|e><e| and the density matrix under the
conditional master equation, which for detector efficiency eta reads

    d(rho)/dt = -i[H_0, rho] - (Gamma/2){|e><e|, rho}
                + (1 - eta) Gamma sigma rho sigma^dag .

In the real vector y = (rho_gg, rho_ee, Re rho_ge, Im rho_ge) this is
four coupled real ODEs, y' = A y, with d(trace)/dt = -eta Gamma rho_ee.
eta = 0 reproduces the unconditional master equation, eta = 1 the pure
no-jump evolution.

The integrator is classical fixed-step RK4. For a linear autonomous
system one RK4 step of size dt is exactly the degree-4 Taylor polynomial
of expm(A dt); the step matrix is therefore built once and applied by
matrix powers, which keeps RK4 semantics (including the O(dt^4) global
convergence signature) while allowing million-point tables to be built
by blocked matrix products instead of a Python step loop.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .params import AtomParams, DensityMatrix, PureState, default_dt

# switch to the degenerate-lambda limit this close to omega = gamma/2
_CRITICAL_TOL = 1e-9


def effective_hamiltonian(params: AtomParams) -> np.ndarray:
    """Non-hermitian no-jump Hamiltonian in the (|g>, |e>) basis."""
    omega, delta, gamma = params.omega, params.delta, params.gamma
    return np.array(
        [
            [0.0, omega / 2.0],
            [omega / 2.0, -delta - 0.5j * gamma],
        ],
        dtype=complex,
    )


def pure_generator(omega: float, delta: float, gamma: float) -> np.ndarray:
    """Generator of c' = -i H_eff c for the amplitude vector (c_g, c_e)."""
    return np.array(
        [
            [0.0, -0.5j * omega],
            [-0.5j * omega, 1j * delta - 0.5 * gamma],
        ],
        dtype=complex,
    )


def bloch_generator(omega: float, delta: float, gamma: float, eta: float) -> np.ndarray:
    """Generator of y' = A y, y = (rho_gg, rho_ee, Re rho_ge, Im rho_ge).

    Accepts eta = 0 (unconditional master equation); the public types
    restrict eta to (0, 1] but the limit is needed as a test oracle and
    for the steady state.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    return np.array(
        [
            [0.0, (1.0 - eta) * gamma, 0.0, -omega],
            [0.0, -gamma, 0.0, omega],
            [0.0, 0.0, -gamma / 2.0, delta],
            [omega / 2.0, -omega / 2.0, -delta, -gamma / 2.0],
        ]
    )


def rk4_step_matrix(generator: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of y' = A y as a matrix.

    For linear autonomous systems RK4 reduces to
    I + A dt + (A dt)^2/2 + (A dt)^3/6 + (A dt)^4/24.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    ad = generator * dt
    eye = np.eye(generator.shape[0], dtype=generator.dtype)
    # Horner form of the degree-4 Taylor polynomial
    step = eye + ad @ (eye + ad @ (eye + ad @ (eye + ad / 4.0) / 3.0) / 2.0)
    return step


def propagate_span(generator: np.ndarray, y0: np.ndarray, span: float, dt_max: float) -> np.ndarray:
    """Evolve y0 over a time span with RK4 substeps no larger than dt_max."""
    if span <= 0:
        raise ValueError(f"span must be > 0, got {span}")
    n_sub = max(1, math.ceil(span / dt_max))
    step = rk4_step_matrix(generator, span / n_sub)
    return np.linalg.matrix_power(step, n_sub) @ y0


def propagate_table(step: np.ndarray, y0: np.ndarray, n_steps: int, block: int = 1024) -> np.ndarray:
    """States (n_steps+1, d) on the step lattice y_k = step^k y0.

    Blocked: powers step^1..step^m are formed once, each block of the
    table is one batched matrix-vector product. Equivalent to sequential
    stepping up to floating-point associativity.
    """
    d = y0.shape[0]
    out = np.empty((n_steps + 1, d), dtype=np.result_type(step, y0))
    out[0] = y0
    if n_steps == 0:
        return out
    m = min(block, n_steps)
    powers = np.empty((m, d, d), dtype=step.dtype)
    powers[0] = step
    for k in range(1, m):
        powers[k] = step @ powers[k - 1]
    filled = 0
    y = np.asarray(y0, dtype=out.dtype)
    while filled < n_steps:
        take = min(m, n_steps - filled)
        out[filled + 1 : filled + 1 + take] = powers[:take] @ y
        y = out[filled + take]
        filled += take
    return out


def _density_to_vec(rho: DensityMatrix) -> np.ndarray:
    return np.array([rho.rho_gg, rho.rho_ee, rho.rho_ge.real, rho.rho_ge.imag])


def _vec_to_density(y: np.ndarray) -> DensityMatrix:
    # integrator roundoff can leave populations a hair negative
    return DensityMatrix(max(float(y[0]), 0.0), max(float(y[1]), 0.0), complex(y[2], y[3]))


def nojump_propagate_pure(state: PureState, params: AtomParams, dt: float) -> PureState:
    """Un-normalized pure-state evolution under H_eff for a time dt.

    Intended for eta = 1 dynamics, where the conditional state of an
    initially pure atom stays pure between clicks.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    gen = pure_generator(params.omega, params.delta, params.gamma)
    c = propagate_span(gen, np.array([state.c_g, state.c_e], dtype=complex), dt, default_dt(params))
    return PureState(complex(c[0]), complex(c[1]))


def nojump_propagate_density(rho: DensityMatrix, params: AtomParams, dt: float) -> DensityMatrix:
    """Conditional no-jump evolution of the density matrix for a time dt."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    gen = bloch_generator(params.omega, params.delta, params.gamma, params.eta)
    y = propagate_span(gen, _density_to_vec(rho), dt, default_dt(params))
    return _vec_to_density(y)


def analytic_nojump_ee(tau, params: AtomParams):
    """Closed-form excited population of the no-jump state started in |g>.

    Valid on resonance (delta = 0):

        rho_ee(tau) = (Omega / 2 lambda)^2 sin^2(lambda tau) e^(-Gamma tau / 2),
        lambda = sqrt(Omega^2 - (Gamma/2)^2) / 2 .

    Below threshold (Omega < Gamma/2) lambda is imaginary and sin
    continues to sinh; at the critical point the limit sin(l t)/l -> t
    is taken explicitly. Accepts scalar or array tau.
    """
    if params.delta != 0.0:
        raise ValueError("analytic form is valid on resonance only (delta = 0)")
    omega, gamma = params.omega, params.gamma
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    if abs(omega - gamma / 2.0) < _CRITICAL_TOL * gamma:
        s = tau
    else:
        lam = cmath.sqrt(complex(omega**2 - (gamma / 2.0) ** 2)) / 2.0
        # real for omega > gamma/2, purely imaginary below; the ratio is real either way
        s = (np.sin(lam * tau) / lam).real
    ee = (omega / 2.0) ** 2 * s**2 * np.exp(-gamma * tau / 2.0)
    if np.ndim(tau) == 0:
        return float(ee)
    return ee


def nojump_survival_analytic(tau, params: AtomParams):
    """Closed-form no-jump survival trace(rho(tau)) on resonance at eta = 1.

    Survival obeys S' = -Gamma rho_ee with S(0) = 1; integrating the
    closed form above gives, with a = Gamma/2 and b = 2 lambda,

        S(tau) = 1 - Gamma (Omega/2 lambda)^2 [ (1 - e^(-a tau)) / (2a)
                 - (a - e^(-a tau)(a cos b tau - b sin b tau)) / (2 Omega^2) ]

    where a^2 + b^2 = Omega^2 was used. Complex lambda handles the
    below-threshold branch. Used for sampling oracles and KS tests.
    """
    if params.delta != 0.0:
        raise ValueError("analytic form is valid on resonance only (delta = 0)")
    omega, gamma = params.omega, params.gamma
    tau = np.asarray(tau, dtype=float)
    a = gamma / 2.0
    if abs(omega - gamma / 2.0) < _CRITICAL_TOL * gamma:
        # critical point: w = Gamma (Omega tau / 2)^2 e^(-a tau); integrate directly
        pref = gamma * (omega / 2.0) ** 2
        integral = pref * (2.0 / a**3 - np.exp(-a * tau) * (tau**2 / a + 2.0 * tau / a**2 + 2.0 / a**3))
        out = 1.0 - integral
    else:
        lam = cmath.sqrt(complex(omega**2 - (gamma / 2.0) ** 2)) / 2.0
        b = 2.0 * lam
        pref = gamma * (omega / (2.0 * lam)) ** 2
        term1 = (1.0 - np.exp(-a * tau)) / (2.0 * a)
        term2 = (a - np.exp(-a * tau) * (a * np.cos(b * tau) - b * np.sin(b * tau))) / (2.0 * omega**2)
        out = (1.0 - pref * (term1 - term2)).real
    if np.ndim(tau) == 0:
        return float(out)
    return np.asarray(out)


def steady_state_ee(params: AtomParams) -> float:
    """Excited population of the stationary unconditional state.

    Solves the linear Bloch fixed point of the eta = 0 master equation in
    (rho_ee, Re rho_ge, Im rho_ge) with rho_gg = 1 - rho_ee eliminated.
    """
    omega, delta, gamma = params.omega, params.delta, params.gamma
    if omega == 0.0:
        return 0.0
    a = np.array(
        [
            [-gamma, 0.0, omega],
            [0.0, -gamma / 2.0, delta],
            [-omega, -delta, -gamma / 2.0],
        ]
    )
    b = np.array([0.0, 0.0, -omega / 2.0])
    rho_ee, _, _ = np.linalg.solve(a, b)
    return float(rho_ee)
