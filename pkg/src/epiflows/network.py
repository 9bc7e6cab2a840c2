"""Travel-flow graphs: construction, balance enforcement, connectivity checks.

Conventions: ``flows[i, j]`` is the number of individuals moving from node j
to node i per unit time. Derived quantities are the outflow fractions
``gamma[j] = sum_i flows[i, j] / populations[j]``, the column-stochastic
routing matrix ``routing[i, j] = flows[i, j] / sum_l flows[l, j]``, and the
coupling matrix ``coupling[i, j] = (N_j / N_i) * routing[i, j] * gamma[j]``
that appears in every compartment's dynamics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BalanceViolation,
    DimensionMismatch,
    NegativeEntry,
    NegativeRate,
    NoConvergence,
    PerturbationUnbalanced,
    ValidationError,
    WindowLargerThanSchedule,
)

SCALE_BALANCE_TOL = 1e-10
SCALE_MAX_ITERATIONS = 10_000


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FlowNetwork:
    """Immutable travel-flow graph with derived routing and coupling matrices."""

    node_ids: tuple[str, ...]
    populations: np.ndarray
    flows: np.ndarray
    gamma: np.ndarray
    routing: np.ndarray
    coupling: np.ndarray

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def node_index(self, node_id: str) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise KeyError(f"unknown node id {node_id!r}") from None


@dataclass(frozen=True)
class NetworkSchedule:
    """Piecewise-constant sequence of networks: (duration, network) periods.

    All periods must share node ids and populations. ``window_bound`` is the
    K used by :func:`check_k_strong`.
    """

    periods: tuple[tuple[float, FlowNetwork], ...]
    window_bound: int | None = None

    def __post_init__(self):
        if not self.periods:
            raise ValidationError("schedule needs at least one period")
        first = self.periods[0][1]
        for duration, net in self.periods:
            if not duration > 0:
                raise ValidationError("period durations must be positive")
            if net.node_ids != first.node_ids:
                raise ValidationError("all periods must share node ids")
            if not np.array_equal(net.populations, first.populations):
                raise ValidationError("all periods must share populations")

    @classmethod
    def static(cls, network: FlowNetwork) -> "NetworkSchedule":
        return cls(periods=((math.inf, network),), window_bound=1)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return self.periods[0][1].node_ids

    @property
    def total_duration(self) -> float:
        return sum(d for d, _ in self.periods)

    def network_at(self, t: float, clamp: bool = False) -> FlowNetwork:
        """Network in force at time t (period starts are inclusive).

        With ``clamp=True``, times past the end fall back to the last period.
        """
        if t < 0:
            raise ValidationError(f"time {t} is before the schedule start")
        elapsed = 0.0
        for duration, net in self.periods:
            elapsed += duration
            if t < elapsed:
                return net
        if clamp:
            return self.periods[-1][1]
        raise ValidationError(
            f"time {t} exceeds schedule coverage {self.total_duration}"
        )


def as_schedule(net_or_schedule) -> NetworkSchedule:
    if isinstance(net_or_schedule, NetworkSchedule):
        return net_or_schedule
    return NetworkSchedule.static(net_or_schedule)


def build_network(
    node_ids,
    populations,
    flows,
    balance_tolerance: float = 1e-6,
) -> FlowNetwork:
    """Validate raw flows and derive gamma, routing, and coupling.

    Per-node balance is enforced relative to outflow:
    ``|outflow_j - inflow_j| <= balance_tolerance * outflow_j``.
    Nodes with zero outflow get gamma 0 and an all-zero routing column.
    """
    node_ids = tuple(str(x) for x in node_ids)
    populations = np.asarray(populations, dtype=float)
    flows = np.asarray(flows, dtype=float)
    n = len(node_ids)
    if populations.shape != (n,) or flows.shape != (n, n):
        raise DimensionMismatch(
            f"expected populations ({n},) and flows ({n}, {n}); "
            f"got {populations.shape} and {flows.shape}"
        )
    if np.any(populations <= 0):
        raise NegativeEntry("populations must be strictly positive")
    if np.any(flows < 0):
        raise NegativeEntry("flows must be nonnegative")
    if np.any(np.diag(flows) != 0):
        raise ValidationError("flows must have a zero diagonal")

    outflow = flows.sum(axis=0)
    inflow = flows.sum(axis=1)
    gap = np.abs(outflow - inflow)
    if math.isfinite(balance_tolerance):
        bad = gap > balance_tolerance * outflow
    else:
        bad = np.zeros_like(gap, dtype=bool)
    if np.any(bad):
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(outflow > 0, gap / outflow, np.where(gap > 0, np.inf, 0.0))
        worst = int(np.argmax(rel))
        raise BalanceViolation(
            f"flow imbalance at node {node_ids[worst]!r}: relative imbalance "
            f"{rel[worst]:.3e} exceeds tolerance {balance_tolerance:.1e}"
        )

    gamma = outflow / populations
    routing = np.zeros_like(flows)
    active = outflow > 0
    routing[:, active] = flows[:, active] / outflow[active]
    coupling = (1.0 / populations)[:, None] * routing * (gamma * populations)[None, :]

    return FlowNetwork(
        node_ids=node_ids,
        populations=_freeze(populations.copy()),
        flows=_freeze(flows.copy()),
        gamma=_freeze(gamma),
        routing=_freeze(routing),
        coupling=_freeze(coupling),
    )


def balance_flows(flows, method: str = "scale") -> np.ndarray:
    """Return flows satisfying per-node balance exactly.

    ``symmetrize`` averages F with its transpose. ``scale`` rescales by a
    diagonal similarity (Osborne-style sweeps) until the worst relative
    imbalance drops below 1e-10; already-balanced input is returned unchanged.
    """
    flows = np.asarray(flows, dtype=float)
    if flows.ndim != 2 or flows.shape[0] != flows.shape[1]:
        raise DimensionMismatch(f"flows must be square, got {flows.shape}")
    if np.any(flows < 0):
        raise NegativeEntry("flows must be nonnegative")
    if np.any(np.diag(flows) != 0):
        raise ValidationError("flows must have a zero diagonal")

    if method == "symmetrize":
        return 0.5 * (flows + flows.T)
    if method != "scale":
        raise ValidationError(f"unknown balance method {method!r}")

    # similarity scaling preserves the zero pattern, so a node with outflow
    # but no inflow (or vice versa) can never be balanced
    has_out = flows.sum(axis=0) > 0
    has_in = flows.sum(axis=1) > 0
    if np.any(has_out != has_in):
        bad = int(np.argmax(has_out != has_in))
        raise NoConvergence(
            f"node index {bad} has {'outflow' if has_out[bad] else 'inflow'} "
            "only; scale balancing cannot converge"
        )

    n = flows.shape[0]
    d = np.ones(n)
    for _ in range(SCALE_MAX_ITERATIONS):
        scaled = (1.0 / d)[:, None] * flows * d[None, :]
        out = scaled.sum(axis=0)
        inn = scaled.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(out > 0, np.abs(out - inn) / out, 0.0)
        if rel.max(initial=0.0) < SCALE_BALANCE_TOL:
            return scaled
        inv_d = 1.0 / d
        for j in range(n):
            row = flows[j, :] @ d
            col = flows[:, j] @ inv_d
            if row > 0 and col > 0:
                d[j] = math.sqrt(row / col)
                inv_d[j] = 1.0 / d[j]
    raise NoConvergence(
        f"scale balancing did not reach {SCALE_BALANCE_TOL:.0e} within "
        f"{SCALE_MAX_ITERATIONS} sweeps"
    )


def _digraph_strongly_connected(adjacency: np.ndarray) -> bool:
    """adjacency[i, j] truthy means an edge j -> i exists."""
    n = adjacency.shape[0]
    if n <= 1:
        return True

    def reaches_all(adj):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(adj[:, u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        return bool(seen.all())

    return reaches_all(adjacency) and reaches_all(adjacency.T)


def is_strongly_connected(network: FlowNetwork) -> bool:
    """True iff the digraph of nonzero routing entries is strongly connected."""
    return _digraph_strongly_connected(network.routing > 0)


def check_k_strong(schedule: NetworkSchedule) -> bool:
    """True iff every window of K consecutive periods has a strongly
    connected edge union, where K is the schedule's window_bound."""
    k = schedule.window_bound
    if k is None or k < 1:
        raise ValidationError("schedule.window_bound must be a positive integer")
    m = len(schedule.periods)
    if k > m:
        raise WindowLargerThanSchedule(
            f"window K={k} exceeds the {m}-period schedule"
        )
    for start in range(m - k + 1):
        union = np.zeros_like(schedule.periods[0][1].routing, dtype=bool)
        for _, net in schedule.periods[start : start + k]:
            union |= net.routing > 0
        if not _digraph_strongly_connected(union):
            return False
    return True


def perturb_flows_balanced(
    network: FlowNetwork,
    theta,
    tol: float = 1e-10,
) -> FlowNetwork:
    """Shift outflow fractions by theta while keeping flows balanced.

    theta must keep gamma nonnegative and satisfy the balance identity
    ``theta_i = sum_j (N_j/N_i) routing[i, j] theta_j`` within tol; routing
    is kept as-is and flows and coupling are recomputed from gamma + theta.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != network.gamma.shape:
        raise DimensionMismatch(
            f"theta must have shape {network.gamma.shape}, got {theta.shape}"
        )
    new_gamma = network.gamma + theta
    if np.any(new_gamma < 0):
        raise NegativeRate("gamma + theta must be nonnegative")
    pops = network.populations
    propagated = (1.0 / pops)[:, None] * network.routing * pops[None, :] @ theta
    residual = float(np.abs(theta - propagated).max())
    if residual > tol:
        raise PerturbationUnbalanced(
            f"theta violates the balance identity by {residual:.3e} (tol {tol:.0e})"
        )
    flows = network.routing * (new_gamma * pops)[None, :]
    coupling = (1.0 / pops)[:, None] * network.routing * (new_gamma * pops)[None, :]
    return FlowNetwork(
        node_ids=network.node_ids,
        populations=pops,
        flows=_freeze(flows),
        gamma=_freeze(new_gamma),
        routing=network.routing,
        coupling=_freeze(coupling),
    )
