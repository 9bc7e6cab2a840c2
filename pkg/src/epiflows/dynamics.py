"""Networked SEIRS-with-flows dynamics: continuous (RK4) and discrete (Euler).

States are per-node fractions (s, e, x, r) that stay on the unit simplex as
long as the network's flows are balanced. The infection term beta_i x_i s_i
is the only nonlinearity; everything else is linear in the stacked state, so
the integrators run on a precomputed 4n x 4n matrix plus that one product.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidState,
    StateLeftSimplex,
    StepTooLarge,
    ValidationError,
)
from .network import FlowNetwork, NetworkSchedule, as_schedule

SIMPLEX_SUM_TOL = 1e-9
CLAMP_EPS = 1e-12
BLOWUP_EPS = 1e-6


@dataclass(frozen=True)
class EpidemicParams:
    """Per-node rates: immunity loss, infection, incubation, healing.

    With ``strict`` (the default) every rate must be strictly positive;
    estimation results may carry zeros and use ``strict=False``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    strict: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta", "sigma", "delta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        shapes = {self.alpha.shape, self.beta.shape, self.sigma.shape, self.delta.shape}
        if len(shapes) != 1 or self.alpha.ndim != 1:
            raise DimensionMismatch(f"rate vectors must share one 1-d shape, got {shapes}")
        stacked = np.stack([self.alpha, self.beta, self.sigma, self.delta])
        if self.strict and np.any(stacked <= 0):
            raise ValidationError("rates must be strictly positive")
        if not self.strict and np.any(stacked < 0):
            raise ValidationError("rates must be nonnegative")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True)
class SystemState:
    """Per-node compartment fractions; each node's four entries sum to 1."""

    s: np.ndarray
    e: np.ndarray
    x: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        for name in ("s", "e", "x", "r"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        shapes = {self.s.shape, self.e.shape, self.x.shape, self.r.shape}
        if len(shapes) != 1 or self.s.ndim != 1:
            raise DimensionMismatch(f"state vectors must share one 1-d shape, got {shapes}")
        m = self.as_matrix()
        if np.any(m < 0) or np.any(m > 1):
            raise InvalidState("state entries must lie in [0, 1]")
        sums = m.sum(axis=0)
        worst = float(np.abs(sums - 1).max(initial=0.0))
        if worst > SIMPLEX_SUM_TOL:
            raise InvalidState(f"per-node sums deviate from 1 by {worst:.3e}")

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def as_matrix(self) -> np.ndarray:
        """Rows s, e, x, r; one column per node."""
        return np.stack([self.s, self.e, self.x, self.r])

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SystemState":
        return cls(s=m[0], e=m[1], x=m[2], r=m[3])

    @classmethod
    def healthy(cls, n: int) -> "SystemState":
        return cls(s=np.ones(n), e=np.zeros(n), x=np.zeros(n), r=np.zeros(n))


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped states; ``data[k]`` is the (4, n) state matrix at times[k]."""

    times: np.ndarray
    data: np.ndarray
    schedule: NetworkSchedule

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")
        if self.data.shape[:2] != (len(self.times), 4):
            raise DimensionMismatch(
                f"data shape {self.data.shape} does not match {len(self.times)} times"
            )

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, k: int) -> SystemState:
        return SystemState.from_matrix(self.data[k])

    @property
    def final_state(self) -> SystemState:
        return self.state_at(len(self) - 1)

    @property
    def x(self) -> np.ndarray:
        """Infection fractions, shape (T, n)."""
        return self.data[:, 2, :]


def _check_dims(state: SystemState, params: EpidemicParams, network: FlowNetwork):
    if not (state.n == params.n == network.n):
        raise DimensionMismatch(
            f"state ({state.n}), params ({params.n}) and network ({network.n}) "
            "must share one node count"
        )


def derivative(
    state: SystemState, params: EpidemicParams, network: FlowNetwork
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Continuous-time rates of change (ds, de, dx, dr).

    For balanced flows the four components sum to zero at every node.
    """
    _check_dims(state, params, network)
    s, e, x, r = state.s, state.e, state.x, state.r
    gamma, phi = network.gamma, network.coupling
    infection = params.beta * x * s
    ds = params.alpha * r - infection - gamma * s + phi @ s
    de = infection - (params.sigma + gamma) * e + phi @ e
    dx = params.sigma * e - (params.delta + gamma) * x + phi @ x
    dr = params.delta * x - (params.alpha + gamma) * r + phi @ r
    return ds, de, dx, dr


class _Kernel:
    """Flattened-state evaluator: dz = L z + infection correction.

    z is the stacked [s; e; x; r] vector of length 4n. Algebraically
    identical to :func:`derivative`; exists so the integrators pay one
    matvec per evaluation instead of a dozen small array ops.
    """

    def __init__(self, params: EpidemicParams, network: FlowNetwork):
        n = network.n
        self.n = n
        self.beta = params.beta
        g = np.diag(network.gamma)
        phi = network.coupling
        a, sg, d = np.diag(params.alpha), np.diag(params.sigma), np.diag(params.delta)
        z = np.zeros((n, n))
        self.lin = np.block(
            [
                [phi - g, z, z, a],
                [z, phi - sg - g, z, z],
                [z, sg, phi - d - g, z],
                [z, z, d, phi - a - g],
            ]
        )

    def __call__(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        out = self.lin @ z
        infection = self.beta * z[2 * n : 3 * n] * z[:n]
        out[:n] -= infection
        out[n : 2 * n] += infection
        return out


def _settle_onto_simplex(z: np.ndarray, n: int, t: float) -> np.ndarray:
    """Clamp rounding-scale boundary violations and renormalize node sums.

    Only excursions within CLAMP_EPS of the boundary are absorbed; entries
    below -BLOWUP_EPS raise StepTooLarge, and anything in between is left to
    trip the trajectory validation rather than being masked.
    """
    low, high = z.min(), z.max()
    if low < -BLOWUP_EPS:
        raise StepTooLarge(
            f"state entry {low:.3e} at t={t:g}; reduce the step size"
        )
    if (-CLAMP_EPS <= low < 0.0) or (1.0 < high <= 1.0 + CLAMP_EPS):
        z = np.clip(z, 0.0, 1.0)
        m = z.reshape(4, n)
        z = (m / m.sum(axis=0)).reshape(-1)
    return z


def integrate(
    state0: SystemState,
    params: EpidemicParams,
    schedule,
    t_end: float,
    step: float = 0.01,
) -> Trajectory:
    """Classic fixed-step RK4 from t=0 to t_end.

    The network is piecewise constant per schedule period and steps are
    truncated at period boundaries, so no step straddles a network change.
    Stored states are clamped onto the simplex (see _settle_onto_simplex).
    """
    schedule = as_schedule(schedule)
    _check_dims(state0, params, schedule.periods[0][1])
    if step <= 0:
        raise ValidationError("step must be positive")
    if t_end < 0:
        raise ValidationError("t_end must be nonnegative")
    if t_end > schedule.total_duration:
        raise ValidationError(
            f"schedule covers [0, {schedule.total_duration}] but t_end={t_end}"
        )

    n = state0.n
    times = [0.0]
    states = [state0.as_matrix().reshape(-1).copy()]
    t = 0.0
    period_end = 0.0
    kernel = None
    for duration, net in schedule.periods:
        if t >= t_end:
            break
        period_end = min(period_end + duration, t_end)
        kernel = _Kernel(params, net)
        z = states[-1]
        while t < period_end - 1e-12 * max(1.0, period_end):
            h = min(step, period_end - t)
            k1 = kernel(z)
            k2 = kernel(z + 0.5 * h * k1)
            k3 = kernel(z + 0.5 * h * k2)
            k4 = kernel(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
            z = _settle_onto_simplex(z, n, t)
            times.append(t)
            states.append(z)

    data = np.array(states).reshape(len(states), 4, n)
    _validate_trajectory_data(data)
    return Trajectory(times=np.array(times), data=data, schedule=schedule)


def _validate_trajectory_data(data: np.ndarray):
    if data.min() < 0 or data.max() > 1:
        raise InvalidState("trajectory left [0, 1]")
    worst = float(np.abs(data.sum(axis=1) - 1).max())
    if worst > SIMPLEX_SUM_TOL:
        raise InvalidState(f"trajectory per-node sums deviate from 1 by {worst:.3e}")


def _euler_step_raw(z: np.ndarray, kernel: _Kernel, h: float, t: float) -> np.ndarray:
    z = z + h * kernel(z)
    low, high = z.min(), z.max()
    if low < -CLAMP_EPS or high > 1.0 + CLAMP_EPS:
        raise StateLeftSimplex(
            f"Euler step at t={t:g} produced entries in [{low:.3e}, {high:.3e}]; "
            "h is too large for these rates"
        )
    return np.clip(z, 0.0, 1.0)


def step_euler(
    state: SystemState, params: EpidemicParams, network: FlowNetwork, h: float
) -> SystemState:
    """One explicit Euler update; per-node sums are preserved up to rounding."""
    _check_dims(state, params, network)
    if h <= 0:
        raise ValidationError("h must be positive")
    z = state.as_matrix().reshape(-1)
    z = _euler_step_raw(z, _Kernel(params, network), h, 0.0)
    return SystemState.from_matrix(z.reshape(4, state.n))


def simulate_discrete(
    state0: SystemState,
    params: EpidemicParams,
    schedule,
    steps: int,
    h: float = 1.0,
    noise_std: float = 0.0,
    rng=None,
) -> Trajectory:
    """Repeated Euler stepping with the network in force at each sample time.

    Gaussian observation noise (clamped to [0, 1], per-node renormalized) is
    applied to the recorded states only; the propagated state stays exact.
    """
    schedule = as_schedule(schedule)
    _check_dims(state0, params, schedule.periods[0][1])
    if steps < 0:
        raise ValidationError("steps must be nonnegative")
    if h <= 0:
        raise ValidationError("h must be positive")

    n = state0.n
    truth = np.empty((steps + 1, 4, n))
    truth[0] = state0.as_matrix()
    z = truth[0].reshape(-1).copy()
    kernel = None
    current_net = None
    for k in range(steps):
        t = k * h
        net = schedule.network_at(t)
        if net is not current_net:
            kernel = _Kernel(params, net)
            current_net = net
        z = _euler_step_raw(z, kernel, h, t)
        truth[k + 1] = z.reshape(4, n)

    if noise_std > 0.0:
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        observed = np.clip(truth + rng.normal(0.0, noise_std, truth.shape), 0.0, 1.0)
        observed /= observed.sum(axis=1, keepdims=True)
    else:
        observed = truth

    times = np.arange(steps + 1, dtype=float) * h
    _validate_trajectory_data(observed)
    return Trajectory(times=times, data=observed, schedule=schedule)


def write_trajectory_csv(path, trajectory: Trajectory) -> None:
    """CSV with columns time, node_id, s, e, x, r (one row per node and time)."""
    node_ids = trajectory.schedule.node_ids
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "node_id", "s", "e", "x", "r"])
        for k, t in enumerate(trajectory.times):
            m = trajectory.data[k]
            for i, node in enumerate(node_ids):
                writer.writerow(
                    [repr(float(t)), node] + [repr(float(m[c, i])) for c in range(4)]
                )


def read_trajectory_csv(path) -> tuple[np.ndarray, tuple[str, ...], np.ndarray]:
    """Inverse of write_trajectory_csv: (times, node_ids, data (T, 4, n))."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"time", "node_id", "s", "e", "x", "r"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(f"trajectory CSV needs columns {sorted(required)}")
        for row in reader:
            rows.append(row)
    if not rows:
        raise ValidationError("trajectory CSV is empty")
    node_ids = tuple(dict.fromkeys(row["node_id"] for row in rows))
    times = sorted({float(row["time"]) for row in rows})
    index = {(t, nid): None for t in times for nid in node_ids}
    data = np.full((len(times), 4, len(node_ids)), np.nan)
    t_pos = {t: k for k, t in enumerate(times)}
    n_pos = {nid: i for i, nid in enumerate(node_ids)}
    for row in rows:
        k, i = t_pos[float(row["time"])], n_pos[row["node_id"]]
        for c, name in enumerate(("s", "e", "x", "r")):
            data[k, c, i] = float(row[name])
        index.pop((float(row["time"]), row["node_id"]), None)
    if index or math.isnan(data.min()):
        raise ValidationError("trajectory CSV is missing node/time rows")
    return np.array(times), node_ids, data
