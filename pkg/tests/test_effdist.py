import numpy as np
import pytest

from epiflows import (
    ArrivalRecord,
    DistanceGraph,
    InfectedSet,
    arrival_times,
    build_network,
    effective_distance_from,
    full_fit_baseline,
    group_effective_distance,
    log_distance_graph,
    prediction_rms,
    simulate_discrete,
    sliding_window_predict,
)
from epiflows.errors import (
    DegenerateFit,
    EmptyInfectedSet,
    InsufficientArrivals,
    NoOverlap,
    ValidationError,
)
from epiflows.network import NetworkSchedule
from helpers import random_balanced_network, shortest_paths_by_enumeration


def chain_network(weights):
    """Directed chain 0 -> 1 -> ... with given hop flows (not balanced)."""
    n = len(weights) + 1
    flows = np.zeros((n, n))
    for i, w in enumerate(weights):
        flows[i + 1, i] = w
    return build_network([str(i) for i in range(n)], np.full(n, 10.0), flows,
                         balance_tolerance=np.inf)


def random_sparse_graph(rng, n, density=0.35):
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    flows = np.where(mask, rng.uniform(1.0, 9.0, (n, n)), 0.0)
    # every node needs some outflow so routing columns are defined
    for j in range(n):
        if flows[:, j].sum() == 0:
            flows[(j + 1) % n, j] = 1.0
    return build_network(
        [str(i) for i in range(n)], rng.uniform(10.0, 1e3, n), flows,
        balance_tolerance=np.inf,
    )


class TestLogDistanceGraph:
    def test_single_hop_values(self):
        net = chain_network([1.0, 3.0])
        # node 0 routes everything to node 1: w = 1 -> zero distance
        g = log_distance_graph(net)
        assert g.d[1, 0] == 0.0
        assert g.d[0, 1] == np.inf
        assert np.all(np.diag(g.d) == 0.0)

    def test_quarter_probability(self):
        flows = np.zeros((3, 3))
        flows[1, 0] = 1.0
        flows[2, 0] = 3.0
        flows[0, 1] = 1.0
        flows[0, 2] = 1.0
        net = build_network(["a", "b", "c"], [10.0, 10.0, 10.0], flows,
                            balance_tolerance=np.inf)
        g = log_distance_graph(net)
        assert g.d[1, 0] == pytest.approx(np.log(4.0), abs=1e-12)

    def test_benchmark_entry(self, five_node):
        net, _ = five_node
        g = log_distance_graph(net)
        assert g.d[1, 0] == pytest.approx(1.390326, abs=1e-4)


class TestEffectiveDistance:
    def test_symmetric_unit_hop(self):
        flows = np.array([[0.0, 5.0], [5.0, 0.0]])
        net = build_network(["a", "b"], [10.0, 10.0], flows)
        d = effective_distance_from(log_distance_graph(net), 0)
        assert np.array_equal(d, [0.0, 0.0])  # w = 1 both ways

    def test_chain_asymmetry(self):
        # each hop keeps probability 0.5 by splitting flow with a sink edge
        n = 3
        flows = np.zeros((4, 4))
        flows[1, 0] = 1.0
        flows[3, 0] = 1.0  # node 3 is a probability sink
        flows[2, 1] = 1.0
        flows[3, 1] = 1.0
        flows[3, 2] = 1.0
        net = build_network(["a", "b", "c", "sink"], np.full(4, 10.0), flows,
                            balance_tolerance=np.inf)
        d = effective_distance_from(log_distance_graph(net), 0)
        assert d[2] == pytest.approx(2.0 * np.log(2.0), abs=1e-12)
        back = effective_distance_from(log_distance_graph(net), 2)
        assert back[0] == np.inf

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            n = int(rng.integers(4, 9))
            net = random_sparse_graph(rng, n)
            g = log_distance_graph(net)
            src = int(rng.integers(0, n))
            got = effective_distance_from(g, src)
            want = shortest_paths_by_enumeration(g.d, src)
            assert np.array_equal(got, want)

    def test_path_probability_duality(self):
        rng = np.random.default_rng(29)
        net = random_sparse_graph(rng, 6)
        g = log_distance_graph(net)
        dist = np.stack([effective_distance_from(g, j) for j in range(6)], axis=1)
        # exp(-D) equals the best path's probability product
        for j in range(6):
            for i in range(6):
                if i != j and np.isfinite(dist[i, j]):
                    best = _best_product(net.routing, j, i)
                    assert np.exp(-dist[i, j]) == pytest.approx(best, rel=1e-9)

    def test_monotone_under_new_edges(self):
        rng = np.random.default_rng(31)
        net = random_sparse_graph(rng, 7)
        g = log_distance_graph(net)
        d2 = g.d.copy()
        missing = np.argwhere(np.isinf(d2))
        if len(missing):
            i, j = missing[rng.integers(0, len(missing))]
            d2[i, j] = 0.3
        richer = DistanceGraph(d=d2)
        for src in range(7):
            before = effective_distance_from(g, src)
            after = effective_distance_from(richer, src)
            assert np.all(after <= before + 1e-12)

    def test_source_validation(self):
        net = chain_network([1.0])
        with pytest.raises(ValidationError):
            effective_distance_from(log_distance_graph(net), 5)


def _best_product(routing, src, dst):
    n = routing.shape[0]
    best = 0.0

    def walk(node, prob, visited):
        nonlocal best
        if node == dst:
            best = max(best, prob)
            return
        for nxt in range(n):
            if routing[nxt, node] > 0 and nxt not in visited:
                walk(nxt, prob * routing[nxt, node], visited | {nxt})

    walk(src, 1.0, {src})
    return best


def _group_graph_oracle(net, members):
    """Edge matrix of the group-modified graph, built independently."""
    n = net.n
    inside = set(members)
    pops = net.populations
    total = sum(pops[j] for j in inside)
    d = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(n):
            if i in inside or i == j:
                d[i, j] = 0.0
            elif j in inside:
                w = sum(pops[m] * net.routing[i, m] for m in inside) / total
                if w > 0:
                    d[i, j] = -np.log(w)
            elif net.routing[i, j] > 0:
                d[i, j] = -np.log(net.routing[i, j])
    return d


class TestGroupDistance:
    def test_empty_set_rejected(self, five_node):
        net, _ = five_node
        with pytest.raises(EmptyInfectedSet):
            group_effective_distance(net, InfectedSet(members=frozenset()))

    def test_singleton_reduces_to_single_source(self):
        rng = np.random.default_rng(41)
        for _ in range(5):
            net = random_sparse_graph(rng, 7)
            j = int(rng.integers(0, 7))
            got = group_effective_distance(net, InfectedSet(members=frozenset({j})))
            want = effective_distance_from(log_distance_graph(net), j)
            assert np.allclose(got, want, atol=1e-12)

    def test_two_members_equal_population_average(self):
        rng = np.random.default_rng(43)
        flows = rng.uniform(0.5, 4.0, (6, 6))
        flows = 0.5 * (flows + flows.T)
        np.fill_diagonal(flows, 0.0)
        net = build_network([str(i) for i in range(6)], np.full(6, 500.0), flows)
        members = frozenset({1, 4})
        got = group_effective_distance(net, InfectedSet(members=members))
        averaged = 0.5 * (net.routing[:, 1] + net.routing[:, 4])
        d = _group_graph_oracle(net, members)
        # equal populations make the exit weights plain column means
        for i in range(6):
            if i not in members and averaged[i] > 0:
                assert d[i, 1] == pytest.approx(-np.log(averaged[i]), abs=1e-12)
        want = np.min(
            [shortest_paths_by_enumeration(d, m) for m in members], axis=0
        )
        assert np.allclose(got, want, atol=1e-12)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(47)
        for _ in range(6):
            n = 10
            net = random_sparse_graph(rng, n, density=0.25)
            k = int(rng.integers(1, 4))
            members = frozenset(int(v) for v in rng.choice(n, size=k, replace=False))
            got = group_effective_distance(net, InfectedSet(members=members))
            d = _group_graph_oracle(net, members)
            want = np.min(
                [shortest_paths_by_enumeration(d, m) for m in members], axis=0
            )
            assert np.allclose(got, want, atol=1e-12, equal_nan=False)
            for m in members:
                assert got[m] == 0.0

    def test_dominated_by_single_member_distances(self):
        rng = np.random.default_rng(53)
        net = random_sparse_graph(rng, 8)
        members = frozenset({0, 3, 5})
        got = group_effective_distance(net, InfectedSet(members=members))
        d = _group_graph_oracle(net, members)
        for m in members:
            single = shortest_paths_by_enumeration(d, m)
            assert np.all(got <= single + 1e-12)


class TestArrivalTimes:
    def test_flat_signal_never_arrives(self):
        times = np.arange(10.0)
        signal = np.zeros((10, 3))
        assert arrival_times(times, signal, 0.5) == []

    def test_single_crossing(self):
        times = np.arange(10.0)
        signal = np.zeros((10, 1))
        signal[7:, 0] = 0.9
        records = arrival_times(times, signal, 0.5)
        assert records == [ArrivalRecord(arrival_time=7.0, node=0)]

    def test_matches_manual_scan(self, five_node, five_node_start):
        net, params = five_node
        traj = simulate_discrete(five_node_start, params, net, steps=60, h=1.0)
        p = 0.01
        records = arrival_times(traj.times, traj.x, p)
        want = []
        for i in range(5):
            for k, t in enumerate(traj.times):
                if traj.x[k, i] > p:
                    want.append((t, i))
                    break
        want.sort()
        assert [(r.arrival_time, r.node) for r in records] == want

    def test_tie_break_by_node(self):
        times = np.arange(3.0)
        signal = np.zeros((3, 2))
        signal[1, :] = 1.0
        records = arrival_times(times, signal, 0.5)
        assert [r.node for r in records] == [0, 1]


def star_system(leaf_probs, arrival_slope=5.0, arrival_intercept=3.0):
    """Hub-and-spoke network whose exit probabilities are controlled.

    The hub population dwarfs the leaves, so group exit weights stay within
    1e-12 of the hub's routing column as leaves join the infected set. Leaf
    arrival times are placed exactly on a line in -log(prob).
    """
    m = len(leaf_probs)
    n = m + 1
    flows = np.zeros((n, n))
    for i, p in enumerate(leaf_probs):
        flows[1 + i, 0] = p
        flows[0, 1 + i] = p
    pops = np.concatenate([[1e9], np.full(m, 1e-3)])
    net = build_network(["hub"] + [f"leaf{i}" for i in range(m)], pops, flows)
    dist = -np.log(np.asarray(leaf_probs))
    arrivals = [ArrivalRecord(arrival_time=0.0, node=0)]
    for i in np.argsort(dist):
        arrivals.append(
            ArrivalRecord(
                arrival_time=float(arrival_slope * dist[i] + arrival_intercept),
                node=1 + int(i),
            )
        )
    return net, arrivals, dist


class TestSlidingWindow:
    def test_exact_line_recovered(self):
        probs = np.exp(-np.arange(1.0, 13.0) / 5.0)  # arrivals at 4, 5, ..., 15
        net, arrivals, dist = star_system(probs / probs.sum() * 0.9)
        schedule = NetworkSchedule.static(net)
        k = 8
        forecast = sliding_window_predict(arrivals, schedule, tau=4, at_arrival_index=k)
        assert not forecast.degenerate
        slope, intercept, shift = forecast.fit
        assert shift == 0.0
        predicted = forecast.predicted()
        actual = {a.node: a.arrival_time for a in arrivals[k + 1 :]}
        assert set(predicted) == set(actual)
        for node, t in actual.items():
            assert predicted[node] == pytest.approx(t, abs=1e-6)

    def test_insufficient_arrivals(self):
        net, arrivals, _ = star_system([0.5, 0.3, 0.2])
        schedule = NetworkSchedule.static(net)
        with pytest.raises(InsufficientArrivals):
            sliding_window_predict(arrivals, schedule, tau=3, at_arrival_index=2)
        with pytest.raises(InsufficientArrivals):
            sliding_window_predict(arrivals, schedule, tau=2, at_arrival_index=99)

    def test_degenerate_distances_fall_back_flat(self):
        # complete graph with uniform weights: every outside node sits at the
        # same distance from any group
        n = 6
        flows = np.full((n, n), 3.0)
        np.fill_diagonal(flows, 0.0)
        net = build_network([str(i) for i in range(n)], np.full(n, 100.0), flows)
        arrivals = [ArrivalRecord(arrival_time=2.0 * k, node=k) for k in range(4)]
        forecast = sliding_window_predict(
            arrivals, NetworkSchedule.static(net), tau=2, at_arrival_index=3
        )
        assert forecast.degenerate
        assert forecast.fit[0] == 0.0
        # flat prediction lands one mean gap past the latest arrival
        for _, t, _ in forecast.predictions:
            assert t == pytest.approx(6.0 + 2.0, abs=1e-12)

    def test_shift_keeps_predictions_in_the_future(self, five_node):
        rng = np.random.default_rng(3)
        # arrivals wildly out of line with distance force a real shift
        net = random_balanced_network(rng, 8)
        arrivals = [ArrivalRecord(arrival_time=float(20 + k), node=k) for k in range(6)]
        forecast = sliding_window_predict(
            arrivals, NetworkSchedule.static(net), tau=3, at_arrival_index=5
        )
        t_now = arrivals[5].arrival_time
        assert forecast.fit[2] >= 0.0
        for _, t, _ in forecast.predictions:
            assert t > t_now

    def test_forecast_serialization(self):
        net, arrivals, _ = star_system([0.4, 0.3, 0.2, 0.06, 0.04])
        forecast = sliding_window_predict(
            arrivals, NetworkSchedule.static(net), tau=2, at_arrival_index=3
        )
        payload = forecast.to_dict()
        assert payload["window"]["tau"] == 2
        assert {"slope", "intercept", "shift"} == set(payload["fit"])


class TestPredictionRms:
    def test_identical(self):
        assert prediction_rms({1: 2.0, 2: 3.0}, {1: 2.0, 2: 3.0}) == 0.0

    def test_single_offset(self):
        assert prediction_rms({5: 10.0}, {5: 7.0}) == pytest.approx(3.0)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(8)
        pred = {i: float(rng.uniform(0, 50)) for i in range(12)}
        act = {i: float(rng.uniform(0, 50)) for i in range(12)}
        want = np.sqrt(np.mean([(pred[i] - act[i]) ** 2 for i in range(12)]))
        assert prediction_rms(pred, act) == pytest.approx(want, rel=1e-12)

    def test_no_overlap(self):
        with pytest.raises(NoOverlap):
            prediction_rms({1: 2.0}, {2: 3.0})


class TestFullFitBaseline:
    def test_perfect_line(self):
        arrivals = [ArrivalRecord(arrival_time=2.0 * d + 1.0, node=i)
                    for i, d in enumerate([0.5, 1.0, 2.0, 4.0])]
        dist = np.array([0.5, 1.0, 2.0, 4.0])
        fit = full_fit_baseline(arrivals, dist)
        assert fit.rms == pytest.approx(0.0, abs=1e-12)
        assert fit.r_value == pytest.approx(1.0)
        assert fit.slope == pytest.approx(2.0)

    def test_two_points_interpolate(self):
        arrivals = [ArrivalRecord(arrival_time=1.0, node=0),
                    ArrivalRecord(arrival_time=9.0, node=1)]
        fit = full_fit_baseline(arrivals, np.array([1.0, 3.0]))
        assert fit.rms == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_distances(self):
        arrivals = [ArrivalRecord(arrival_time=float(k), node=k) for k in range(3)]
        with pytest.raises(DegenerateFit):
            full_fit_baseline(arrivals, np.ones(3))

    def test_needs_two_points(self):
        with pytest.raises(ValidationError):
            full_fit_baseline([ArrivalRecord(arrival_time=0.0, node=0)], np.ones(1))
