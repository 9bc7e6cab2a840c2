"""Effective distance on mobility graphs and arrival-time forecasting.

A hop from node j to node i costs -log w_ij, so a path's length is the
negative log of its probability and the shortest path is the most probable
one. Arrival times grow close to linearly in this distance, which the
shifting-window predictor exploits by refitting the line on recent arrivals.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateFit,
    DimensionMismatch,
    EmptyInfectedSet,
    InsufficientArrivals,
    NoOverlap,
    ValidationError,
)
from .network import FlowNetwork, NetworkSchedule

EPS_SHIFT = 1.0  # one sampling interval of margin past the latest arrival


@dataclass(frozen=True)
class DistanceGraph:
    """Edge matrix d[i, j] = cost of the hop j -> i (inf where absent)."""

    d: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class InfectedSet:
    """Nodes whose infection signal exceeds the threshold.

    threshold is None when the set was reconstructed from arrival history
    rather than from an instantaneous state.
    """

    members: frozenset[int]
    threshold: float | None = None

    @classmethod
    def from_state(cls, state, threshold: float) -> "InfectedSet":
        members = frozenset(int(i) for i in np.nonzero(state.x > threshold)[0])
        return cls(members=members, threshold=threshold)


@dataclass(frozen=True, order=True)
class ArrivalRecord:
    arrival_time: float
    node: int


@dataclass(frozen=True)
class ArrivalForecast:
    """Predicted arrival times for the not-yet-infected nodes.

    predictions holds (node, predicted_time, effective_distance) triples;
    fit is (slope, intercept, shift); window is (tau, T_{k-tau}, T_k).
    degenerate marks a flat fallback fit (all training distances equal).
    """

    predictions: tuple[tuple[int, float, float], ...]
    fit: tuple[float, float, float]
    window: tuple[int, float, float]
    degenerate: bool = False

    def predicted(self) -> dict[int, float]:
        return {node: t for node, t, _ in self.predictions}

    def to_dict(self) -> dict:
        slope, intercept, shift = self.fit
        tau, t_base, t_now = self.window
        return {
            "predictions": [
                {"node": n, "predicted_time": t, "effective_distance": d}
                for n, t, d in self.predictions
            ],
            "fit": {"slope": slope, "intercept": intercept, "shift": shift},
            "window": {"tau": tau, "t_start": t_base, "t_now": t_now},
            "degenerate": self.degenerate,
        }


def log_distance_graph(network: FlowNetwork) -> DistanceGraph:
    """One-step costs: 0 on the diagonal, -log w where w > 0, inf otherwise."""
    w = network.routing
    d = np.full_like(w, np.inf)
    pos = w > 0
    d[pos] = -np.log(w[pos])
    np.fill_diagonal(d, 0.0)
    return DistanceGraph(d=d)


def _dijkstra(d: np.ndarray, sources: list[tuple[int, float]]) -> np.ndarray:
    """Label-setting shortest paths over edge costs d[i, j] (hop j -> i).

    Heap entries are (distance, node), so equal distances settle in node
    order, keeping results deterministic.
    """
    n = d.shape[0]
    dist = np.full(n, np.inf)
    heap = []
    for node, d0 in sources:
        if d0 < dist[node]:
            dist[node] = d0
            heapq.heappush(heap, (d0, node))
    finite_cols = [np.nonzero(np.isfinite(d[:, j]))[0] for j in range(n)]
    while heap:
        du, u = heapq.heappop(heap)
        if du > dist[u]:
            continue
        for v in finite_cols[u]:
            if v == u:
                continue
            dv = du + d[v, u]
            if dv < dist[v]:
                dist[v] = dv
                heapq.heappush(heap, (dv, int(v)))
    return dist


def effective_distance_from(graph: DistanceGraph, source: int) -> np.ndarray:
    """Distances D[i] of every node i from the source (edges run j -> i,
    so this follows travel direction; unreachable nodes get inf)."""
    if not 0 <= source < graph.n:
        raise ValidationError(f"source {source} out of range for n={graph.n}")
    return _dijkstra(graph.d, [(source, 0.0)])


def group_effective_distance(network: FlowNetwork, infected: InfectedSet) -> np.ndarray:
    """Distance of every node from the infected group as a whole.

    Hops out of the group use the population-weighted aggregate probability
    w~_i = sum_{j in group} N_j w_ij / sum_{j in group} N_j; hops landing in
    the group are free; hops between outside nodes keep their -log w cost.
    Group members report distance 0.
    """
    if not infected.members:
        raise EmptyInfectedSet("infected set has no members")
    n = network.n
    members = sorted(infected.members)
    if members[0] < 0 or members[-1] >= n:
        raise ValidationError("infected set contains out-of-range nodes")
    mask = np.zeros(n, dtype=bool)
    mask[members] = True

    pops = network.populations
    w_group = (network.routing[:, mask] * pops[mask]).sum(axis=1) / pops[mask].sum()

    d = np.full((n, n), np.inf)
    outside = ~mask
    w_out = network.routing[np.ix_(outside, outside)]
    block = np.full(w_out.shape, np.inf)
    pos = w_out > 0
    block[pos] = -np.log(w_out[pos])
    d[np.ix_(outside, outside)] = block
    exit_cost = np.full(n, np.inf)
    pos = outside & (w_group > 0)
    exit_cost[pos] = -np.log(w_group[pos])
    d[:, mask] = exit_cost[:, None]
    d[mask, :] = 0.0
    np.fill_diagonal(d, 0.0)

    return _dijkstra(d, [(m, 0.0) for m in members])


def arrival_times(times, signal, threshold: float) -> list[ArrivalRecord]:
    """First time each node's signal strictly exceeds the threshold.

    signal has shape (T, n). Nodes that never cross are omitted; results are
    sorted by arrival time with ties broken by node index.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 2 or signal.shape[0] != len(times):
        raise DimensionMismatch(
            f"signal shape {signal.shape} does not match {len(times)} times"
        )
    records = []
    crossed = signal > threshold
    for i in range(signal.shape[1]):
        hits = np.nonzero(crossed[:, i])[0]
        if len(hits):
            records.append(ArrivalRecord(arrival_time=float(times[hits[0]]), node=i))
    records.sort(key=lambda rec: (rec.arrival_time, rec.node))
    return records


def _ols_line(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    a = np.column_stack([xs, np.ones_like(xs)])
    coef, *_ = np.linalg.lstsq(a, ys, rcond=None)
    return float(coef[0]), float(coef[1])


def sliding_window_predict(
    arrivals: list[ArrivalRecord],
    schedule: NetworkSchedule,
    tau: int,
    at_arrival_index: int,
) -> ArrivalForecast:
    """Forecast the remaining nodes' arrival times at the k-th arrival.

    Training pairs are the tau most recent arrivals with their distances to
    the infected group as it stood at T_{k-tau}; predictions use distances
    to the group at T_k plus a shift keeping every prediction past T_k.
    """
    if tau < 2:
        raise ValidationError("tau must be at least 2 to fit a line")
    k = at_arrival_index
    if k >= len(arrivals):
        raise InsufficientArrivals(
            f"arrival index {k} out of range for {len(arrivals)} arrivals"
        )
    if k < tau:
        raise InsufficientArrivals(
            f"need more than tau={tau} arrivals before predicting (index {k})"
        )
    n = len(schedule.node_ids)
    t_base = arrivals[k - tau].arrival_time
    t_now = arrivals[k].arrival_time

    group_then = InfectedSet(members=frozenset(a.node for a in arrivals[: k - tau + 1]))
    net_then = schedule.network_at(t_base, clamp=True)
    dist_then = group_effective_distance(net_then, group_then)

    train = arrivals[k - tau + 1 : k + 1]
    xs = np.array([dist_then[a.node] for a in train])
    ys = np.array([a.arrival_time for a in train])
    usable = np.isfinite(xs)

    degenerate = bool(usable.sum() < 2 or xs[usable].std() < 1e-12)
    if degenerate:
        # flat fallback: every remaining node is due one mean arrival gap out
        mean_gap = float(np.mean(np.diff(ys))) if tau > 1 else EPS_SHIFT
        slope, intercept = 0.0, t_now + mean_gap
    else:
        slope, intercept = _ols_line(xs[usable], ys[usable])

    group_now = InfectedSet(members=frozenset(a.node for a in arrivals[: k + 1]))
    net_now = schedule.network_at(t_now, clamp=True)
    dist_now = group_effective_distance(net_now, group_now)

    remaining = [i for i in range(n) if i not in group_now.members]
    raw = {}
    for i in remaining:
        if np.isfinite(dist_now[i]):
            raw[i] = slope * float(dist_now[i]) + intercept
    shift = max(0.0, t_now + EPS_SHIFT - min(raw.values())) if raw else 0.0
    predictions = tuple(
        (i, raw[i] + shift, float(dist_now[i])) for i in sorted(raw)
    )
    return ArrivalForecast(
        predictions=predictions,
        fit=(slope, intercept, shift),
        window=(tau, t_base, t_now),
        degenerate=degenerate,
    )


def prediction_rms(predicted, actual) -> float:
    """Root-mean-square gap between predicted and actual arrival times,
    taken over the nodes present in both mappings."""
    common = sorted(set(predicted) & set(actual))
    if not common:
        raise NoOverlap("no nodes are shared between predicted and actual")
    gaps = np.array([predicted[i] - actual[i] for i in common])
    return float(np.sqrt(np.mean(gaps**2)))


@dataclass(frozen=True)
class FullFitResult:
    slope: float
    intercept: float
    rms: float
    r_value: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "rms": self.rms, "r_value": self.r_value}


def full_fit_baseline(arrivals: list[ArrivalRecord], origin_distances) -> FullFitResult:
    """Single line through every (distance-from-origin, arrival-time) pair.

    This is the after-the-fact baseline the shifting window is compared
    against; also reports the correlation coefficient R of the pairs.
    """
    origin_distances = np.asarray(origin_distances, dtype=float)
    pairs = [
        (float(origin_distances[a.node]), a.arrival_time)
        for a in arrivals
        if np.isfinite(origin_distances[a.node])
    ]
    if len(pairs) < 2:
        raise ValidationError("need at least two arrivals with finite distances")
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    if xs.std() < 1e-12:
        raise DegenerateFit("all origin distances are equal; no line to fit")
    slope, intercept = _ols_line(xs, ys)
    resid = slope * xs + intercept - ys
    rms = float(np.sqrt(np.mean(resid**2)))
    if ys.std() < 1e-12:
        r = 0.0
    else:
        r = float(np.corrcoef(xs, ys)[0, 1])
    return FullFitResult(slope=slope, intercept=intercept, rms=rms, r_value=r)
