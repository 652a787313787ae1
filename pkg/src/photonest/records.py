"""Seeded simulation of photon-detection records and record utilities.

Sampling uses the norm-threshold scheme: draw r ~ U(0,1) and evolve the
un-normalized pure state from |g> under H_eff until its squared norm
(the no-click survival probability) crosses r; the crossing time is the
waiting time and the state resets to |g>. Because every interval
restarts from the same state, the survival curve is precomputed once on
the RK4 substep lattice and each draw reduces to a binary search plus a
bisection inside the bracketing substep, to |norm^2 - r| < 1e-10.

RNG is the counter-based Philox generator keyed with two 64-bit words
(seed, stream): a record's waiting-time draws use stream = the record's
trajectory index (0 for a single record, i for member i of an ensemble),
and thinning draws use a dedicated stream offset so they can never
collide with trajectory draws under the same seed.

Finite detector efficiency is modelled only by Bernoulli thinning of
eta = 1 records, never by direct eta-dependent simulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .params import AtomParams, default_dt

# second key word for thinning streams; trajectory streams count from 0
_THIN_STREAM_BASE = 2**32

_NORM_TOL = 1e-10
_LATTICE_FLOOR = 1e-13


@dataclass(frozen=True)
class ClickRecord:
    """Ordered detection timestamps plus generating metadata."""

    times: np.ndarray
    duration: float
    params: AtomParams
    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("times must be strictly increasing")
            if times[0] <= 0 or times[-1] > self.duration * (1 + 1e-12):
                raise ValueError("times must lie in (0, duration]")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        object.__setattr__(self, "times", times.copy())
        self.times.setflags(write=False)

    @property
    def n_clicks(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class WaitingTimes:
    """Inter-click intervals; the first interval is measured from t = 0."""

    taus: np.ndarray

    def __post_init__(self) -> None:
        taus = np.asarray(self.taus, dtype=float)
        if taus.size and np.any(taus <= 0):
            raise ValueError("waiting times must be > 0")
        object.__setattr__(self, "taus", taus.copy())
        self.taus.setflags(write=False)

    def __len__(self) -> int:
        return int(self.taus.size)


def waiting_times(record: ClickRecord) -> WaitingTimes:
    """Consecutive differences of the click times, first from t = 0.

    The atom starts in |g>, the same state it re-enters after every
    click, so the first interval follows the same distribution.
    """
    if record.n_clicks == 0:
        return WaitingTimes(np.empty(0))
    return WaitingTimes(np.diff(record.times, prepend=0.0))


class _SurvivalLattice:
    """Pure no-jump states from |g> on the RK4 step lattice.

    Node states sit every coarse_factor fine RK4 steps (the node step is
    the exact matrix power of the fine step, so the lattice is the fine
    RK4 trajectory, only stored sparsely). Sampling brackets a node,
    then bisects inside it; trial times decompose as q fine steps plus a
    partial fine step, evaluated with the stored fine-step powers, so
    click times carry fine-step accuracy at any driving strength.
    """

    MAX_NODES = 1 << 22

    def __init__(self, omega: float, delta: float, gamma: float, dt: float):
        self.dt = dt
        gen = dynamics.pure_generator(omega, delta, gamma)
        fine = dynamics.rk4_step_matrix(gen, dt)
        # generator powers for the partial fine step
        # M(s) = I + s G1 + s^2 G2 + s^3 G3 + s^4 G4, the RK4 polynomial
        eye = np.eye(2, dtype=complex)
        self.gpow = [eye, gen, gen @ gen / 2.0, None, None]
        self.gpow[3] = self.gpow[2] @ gen / 3.0
        self.gpow[4] = self.gpow[3] @ gen / 4.0
        # -2 * slowest amplitude decay rate bounds the norm decay
        slow = -2.0 * np.max(np.linalg.eigvals(gen).real)
        horizon = -math.log(_LATTICE_FLOOR) / max(slow, 1e-12)
        n_fine = max(64, math.ceil(horizon / dt))
        self.coarse = 1
        while n_fine / self.coarse > self.MAX_NODES:
            self.coarse *= 2
        self.fine_powers = np.empty((self.coarse + 1, 2, 2), dtype=complex)
        self.fine_powers[0] = eye
        for j in range(1, self.coarse + 1):
            self.fine_powers[j] = fine @ self.fine_powers[j - 1]
        self.node_dt = self.coarse * dt
        self.node_step = self.fine_powers[self.coarse]
        self._build(math.ceil(n_fine / self.coarse))

    def _build(self, n_nodes: int) -> None:
        psi0 = np.array([1.0 + 0.0j, 0.0j])
        self.states = dynamics.propagate_table(self.node_step, psi0, n_nodes)
        self.norms = np.abs(self.states[:, 0]) ** 2 + np.abs(self.states[:, 1]) ** 2

    def _extend_below(self, r_min: float) -> None:
        while self.norms[-1] > r_min:
            self._build(2 * (self.states.shape[0] - 1))

    def _norm_at(self, s: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """Squared norm a time s past the node states psi, s in [0, node_dt]."""
        q = np.minimum((s / self.dt).astype(int), self.coarse)
        rem = s - q * self.dt
        psi_q = np.einsum("nij,nj->ni", self.fine_powers[q], psi)
        r = rem[:, None, None]
        m = (
            self.gpow[0]
            + r * self.gpow[1]
            + r**2 * self.gpow[2]
            + r**3 * self.gpow[3]
            + r**4 * self.gpow[4]
        )
        out = np.einsum("nij,nj->ni", m, psi_q)
        return np.abs(out[:, 0]) ** 2 + np.abs(out[:, 1]) ** 2

    def sample(self, r: np.ndarray) -> np.ndarray:
        """Waiting times tau with survival(tau) = r, elementwise."""
        r = np.asarray(r, dtype=float)
        if r.size == 0:
            return np.empty(0)
        # r = 0 would demand an infinite lattice; the neglected mass is 1e-100
        r = np.maximum(r, 1e-100)
        self._extend_below(float(r.min()))
        # norms decrease; locate k with norms[k] >= r > norms[k+1]
        k = np.searchsorted(-self.norms, -r, side="right") - 1
        psi = self.states[k]
        lo = np.zeros(r.shape)
        hi = np.full(r.shape, self.node_dt)
        done = np.abs(self.norms[k] - r) < _NORM_TOL
        hi[done] = 0.0
        for _ in range(200):
            act = np.flatnonzero(~done)
            if act.size == 0:
                break
            mid = 0.5 * (lo + hi)
            v = self._norm_at(mid[act], psi[act])
            hit = np.abs(v - r[act]) < _NORM_TOL
            above = v > r[act]
            lo[act[above]] = mid[act[above]]
            hi[act[~above]] = mid[act[~above]]
            conv = act[hit]
            lo[conv] = mid[conv]
            hi[conv] = mid[conv]
            done[conv] = True
        else:
            raise RuntimeError("norm-threshold bisection failed to converge")
        taus = k * self.node_dt + 0.5 * (lo + hi)
        # r within tolerance of 1 can resolve to tau = 0; keep taus positive
        # (the probability mass below the floor is ~1e-20)
        return np.maximum(taus, 1e-3 * self.dt)


_lattice_cache: dict = {}


def _lattice_for(params: AtomParams) -> _SurvivalLattice:
    key = (params.omega, params.delta, params.gamma, default_dt(params))
    if key not in _lattice_cache:
        if len(_lattice_cache) >= 8:
            _lattice_cache.pop(next(iter(_lattice_cache)))
        _lattice_cache[key] = _SurvivalLattice(*key)
    return _lattice_cache[key]


def _rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_record(
    params: AtomParams,
    duration: float | None = None,
    n_clicks: int | None = None,
    seed: int = 0,
    stream: int = 0,
) -> ClickRecord:
    """Simulate a detection record at perfect efficiency.

    Exactly one stop condition must be given: observation time
    (duration) or click count (n_clicks). Waiting times are i.i.d.
    draws from w(tau); the state resets to |g> after every click.
    """
    if params.eta != 1.0:
        raise ValueError("simulate at eta = 1; use thin_record for finite efficiency")
    if (duration is None) == (n_clicks is None):
        raise ValueError("give exactly one of duration, n_clicks")
    if duration is not None and duration <= 0:
        raise ValueError("duration must be > 0")
    if n_clicks is not None and n_clicks < 1:
        raise ValueError("n_clicks must be >= 1")

    if params.omega == 0.0:
        if n_clicks is not None:
            raise ValueError("omega = 0 never fluoresces, cannot reach a click count")
        return ClickRecord(np.empty(0), duration, params, seed, stream)

    rng = _rng(seed, stream)
    lattice = _lattice_for(params)

    if n_clicks is not None:
        taus = lattice.sample(rng.random(n_clicks))
        times = np.cumsum(taus)
        return ClickRecord(times, float(times[-1]), params, seed, stream)

    rate = max(params.eta * params.gamma * dynamics.steady_state_ee(params), 1e-12)
    times = np.empty(0)
    elapsed = 0.0
    while elapsed < duration:
        expect = (duration - elapsed) * rate
        batch = int(expect + 6.0 * math.sqrt(expect + 1.0) + 16)
        taus = lattice.sample(rng.random(batch))
        times = np.concatenate([times, elapsed + np.cumsum(taus)])
        elapsed = float(times[-1])
    times = times[times <= duration]
    return ClickRecord(times, duration, params, seed, stream)


def thin_record(record: ClickRecord, eta: float, seed: int) -> ClickRecord:
    """Keep each click independently with probability eta.

    Models a detector that reports a fraction eta of the events of a
    perfect record; metadata eta is updated accordingly.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1], got {eta}")
    if eta == 1.0:
        return record
    rng = _rng(seed, _THIN_STREAM_BASE + record.stream)
    keep = rng.random(record.n_clicks) < eta
    new_eta = record.params.eta * eta
    return ClickRecord(
        record.times[keep], record.duration, record.params.with_eta(new_eta), seed, record.stream
    )


# ---------------------------------------------------------------- file io


def record_meta(record: ClickRecord) -> dict:
    p = record.params
    return {
        "omega": p.omega,
        "delta": p.delta,
        "gamma": p.gamma,
        "eta": p.eta,
        "duration": record.duration,
        "seed": record.seed,
        "stream": record.stream,
        "n_clicks": record.n_clicks,
    }


def write_record_csv(path, record: ClickRecord, extra_meta: dict | None = None) -> None:
    meta = dict(extra_meta or {})
    meta.update(record_meta(record))
    with open(path, "w") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value!r}\n")
        fh.write("time\n")
        for t in record.times:
            fh.write(f"{float(t)!r}\n")


def write_record_json(path, record: ClickRecord, extra_meta: dict | None = None) -> None:
    payload = {
        "params": {
            "omega": record.params.omega,
            "delta": record.params.delta,
            "gamma": record.params.gamma,
            "eta": record.params.eta,
        },
        "duration": record.duration,
        "seed": record.seed,
        "stream": record.stream,
        "times": record.times.tolist(),
    }
    if extra_meta:
        payload["meta"] = extra_meta
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def read_record(path) -> ClickRecord:
    """Read a record written by either serializer (sniffs the format)."""
    with open(path) as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "{":
            payload = json.load(fh)
            params = AtomParams(**payload["params"])
            return ClickRecord(
                np.asarray(payload["times"], dtype=float),
                float(payload["duration"]),
                params,
                int(payload["seed"]),
                int(payload.get("stream", 0)),
            )
        meta: dict = {}
        times = []
        for line in fh:
            line = line.strip()
            if not line or line == "time":
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            times.append(float(line))
        params = AtomParams(
            omega=float(meta["omega"]),
            delta=float(meta["delta"]),
            gamma=float(meta["gamma"]),
            eta=float(meta["eta"]),
        )
        return ClickRecord(
            np.asarray(times, dtype=float),
            float(meta["duration"]),
            params,
            int(meta["seed"]),
            int(meta.get("stream", 0)),
        )
