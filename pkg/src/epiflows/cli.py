"""Command-line interface: simulate | stability | estimate | distance | predict | validate-data.

Reports are JSON, bulk series are CSV, and every file is written atomically
(temp file + rename) so failed runs leave no partial outputs. Exit codes:
0 success, 1 computational failure, 2 input or validation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile

import numpy as np

from . import demo
from .dynamics import (
    SystemState,
    integrate,
    read_trajectory_csv,
    simulate_discrete,
    write_trajectory_csv,
)
from .effdist import (
    InfectedSet,
    arrival_times,
    effective_distance_from,
    full_fit_baseline,
    group_effective_distance,
    log_distance_graph,
    prediction_rms,
    sliding_window_predict,
)
from .errors import (
    ComputationError,
    EpiflowsError,
    InsufficientArrivals,
    ValidationError,
)
from .estimation import (
    ObservationSeries,
    estimate_all,
    read_params_csv,
    write_estimate_csv,
)
from .ingest import (
    infer_states,
    load_cases,
    load_flows,
    load_populations,
)
from .network import (
    NetworkSchedule,
    is_strongly_connected,
)
from .stability import (
    classify_healthy,
    eigenvalue_drift_under_perturbation,
    solve_endemic,
    uniqueness_condition,
)

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_VALIDATION = 2


def _atomic_write(path: str, write_body) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-epiflows-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_body(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_path(path: str, write_to) -> None:
    """Like _atomic_write but for writers that take a path, not a stream."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-epiflows-")
    os.close(fd)
    try:
        write_to(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, lambda fh: fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n"))


def _write_csv(path: str, header: list[str], rows) -> None:
    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

    _atomic_write(path, body)


def _out(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


# ---------------------------------------------------------------- inputs

def _load_system(args, need_params: bool = True):
    """Resolve the (schedule, params) pair from --demo or data files."""
    if args.demo:
        if args.demo != "five-node":
            raise ValidationError(f"unknown demo system {args.demo!r}")
        network, params = demo.five_node_system()
        return NetworkSchedule.static(network), params
    if not args.populations or not args.flows:
        raise ValidationError("provide --demo five-node or both --populations and --flows")
    node_ids, populations = load_populations(args.populations)
    schedule = load_flows(args.flows, node_ids, populations, args.aggregation_days)
    if len(schedule.periods) == 1:
        # a single averaging window means the flows carry no time variation,
        # so treat the network as static rather than as a 1-window schedule
        schedule = NetworkSchedule.static(schedule.periods[0][1])
    params = None
    if need_params:
        if not args.params:
            raise ValidationError("this command needs --params (node_id,beta,sigma,delta,alpha)")
        param_ids, params = read_params_csv(args.params)
        if param_ids != node_ids:
            raise ValidationError("params CSV node order must match populations CSV")
    return schedule, params


def _initial_state(args, schedule: NetworkSchedule) -> SystemState:
    node_ids = schedule.node_ids
    n = len(node_ids)
    if args.initial == "demo":
        if not args.demo:
            raise ValidationError("--initial demo requires --demo")
        return demo.five_node_initial_state()
    if args.initial == "healthy":
        return SystemState.healthy(n)
    if args.initial == "seeded":
        if args.seed_node is None:
            raise ValidationError("--initial seeded requires --seed-node")
        try:
            origin = node_ids.index(args.seed_node)
        except ValueError:
            raise ValidationError(f"unknown node id {args.seed_node!r}") from None
        return demo.seeded_initial_state(n, origin, args.seed_exposed)
    raise ValidationError(f"unknown initial state {args.initial!r}")


def _load_observations(args) -> ObservationSeries:
    """Observation series from a trajectory CSV or inferred from case counts."""
    if bool(args.observations) == bool(args.cases):
        raise ValidationError("provide exactly one of --observations or --cases")
    schedule, _ = _load_system(args, need_params=False)
    if args.observations:
        times, node_ids, data = read_trajectory_csv(args.observations)
        if node_ids != schedule.node_ids:
            raise ValidationError("observation nodes do not match the network nodes")
        gaps = np.diff(times)
        if len(gaps) == 0:
            raise ValidationError("need at least two observation times")
        return ObservationSeries(h=float(gaps[0]), times=times, data=data, schedule=schedule)
    cases = load_cases(args.cases)
    if cases.node_ids != schedule.node_ids:
        raise ValidationError("case-series nodes do not match the network nodes")
    return infer_states(cases, schedule.periods[0][1].populations, schedule=schedule)


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    schedule, params = _load_system(args)
    state0 = _initial_state(args, schedule)
    if args.mode == "continuous":
        trajectory = integrate(state0, params, schedule, t_end=args.t_end, step=args.step)
    else:
        trajectory = simulate_discrete(
            state0, params, schedule, steps=args.steps, h=args.h,
            noise_std=args.noise_std, rng=args.seed,
        )
    traj_path = _out(args, "trajectory.csv")
    _atomic_write_path(traj_path, lambda p: write_trajectory_csv(p, trajectory))
    final = trajectory.final_state
    summary = {
        "mode": args.mode,
        "samples": len(trajectory),
        "t_final": float(trajectory.times[-1]),
        "node_ids": list(schedule.node_ids),
        "final_infected": [float(v) for v in final.x],
        "endemic_plateau": bool(np.all(final.x > 1e-3)),
        "max_sum_error": float(np.abs(trajectory.data.sum(axis=1) - 1.0).max()),
    }
    _write_json(_out(args, "summary.json"), summary)
    if args.gnuplot:
        _emit_trajectory_gnuplot(args, schedule.node_ids)
    print(f"wrote {traj_path}")
    return EXIT_OK


def cmd_stability(args) -> int:
    schedule, params = _load_system(args)
    network = schedule.periods[0][1]
    report = classify_healthy(params, network, marginal_band=args.marginal_band)
    payload = report.to_dict()
    payload["uniqueness_condition"] = uniqueness_condition(params, network)
    payload["strongly_connected"] = is_strongly_connected(network)
    if args.perturb_scale is not None:
        drift = eigenvalue_drift_under_perturbation(
            params, network, args.perturb_scale * network.gamma
        )
        payload["perturbation"] = {"theta_scale": args.perturb_scale, "eigenvalue_drift": drift}
    _write_json(_out(args, "stability.json"), payload)
    if args.endemic:
        solution = solve_endemic(
            params, network, tolerance=args.tolerance,
            max_iterations=args.max_iterations, damping=args.damping,
        )
        endemic = solution.to_dict()
        endemic["node_ids"] = list(network.node_ids)
        _write_json(_out(args, "endemic.json"), endemic)
    print(f"healthy state: {report.classification} (s(U) = {report.s_of_U:.6g})")
    return EXIT_OK


def cmd_estimate(args) -> int:
    series = _load_observations(args)
    estimate = estimate_all(series, solver=args.solver)
    _write_json(_out(args, "estimate.json"), estimate.to_dict())
    csv_path = _out(args, "estimate.csv")
    _atomic_write_path(csv_path, lambda p: write_estimate_csv(p, estimate))
    bad = [nid for nid, ok in zip(estimate.node_ids, estimate.identifiable) if not ok]
    if bad:
        print(f"warning: {len(bad)} node(s) not identifiable: {', '.join(bad)}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_distance(args) -> int:
    schedule, _ = _load_system(args, need_params=False)
    network = schedule.periods[0][1]
    node_ids = network.node_ids
    if bool(args.source) == bool(args.infected):
        raise ValidationError("provide exactly one of --source or --infected")
    if args.source:
        source = network.node_index(args.source)
        dist = effective_distance_from(log_distance_graph(network), source)
        label = {"kind": "from_source", "source": args.source}
    else:
        members = frozenset(network.node_index(x) for x in args.infected.split(","))
        dist = group_effective_distance(network, InfectedSet(members=members))
        label = {"kind": "from_group", "members": sorted(args.infected.split(","))}
    rows = [
        [node_ids[i], repr(float(dist[i])) if np.isfinite(dist[i]) else "inf"]
        for i in range(network.n)
    ]
    _write_csv(_out(args, "distances.csv"), ["node_id", "effective_distance"], rows)
    _write_json(_out(args, "distances.json"), label | {
        "distances": {node_ids[i]: (float(dist[i]) if np.isfinite(dist[i]) else None)
                      for i in range(network.n)}})
    print(f"wrote {_out(args, 'distances.csv')}")
    return EXIT_OK


def cmd_predict(args) -> int:
    series = _load_observations(args)
    schedule = series.schedule
    node_ids = schedule.node_ids
    if args.cases:
        # arrival = first reported case, so threshold sits at zero counts
        signal = np.asarray(load_cases(args.cases).cumulative, dtype=float)
        threshold = 0.0
    else:
        signal = series.data[:, 2, :]
        threshold = args.threshold
    arrivals = arrival_times(series.times, signal, threshold)
    if len(arrivals) < 2:
        raise InsufficientArrivals(f"only {len(arrivals)} node(s) ever crossed the threshold")

    if args.origin:
        if args.origin not in node_ids:
            raise ValidationError(f"unknown origin node {args.origin!r}")
        origin = node_ids.index(args.origin)
    else:
        origin = arrivals[0].node
    origin_net = schedule.network_at(arrivals[0].arrival_time, clamp=True)
    origin_dist = effective_distance_from(log_distance_graph(origin_net), origin)
    fit = full_fit_baseline(arrivals, origin_dist)

    actual = {a.node: a.arrival_time for a in arrivals}
    window_runs = []
    for k in range(args.tau, len(arrivals) - args.ahead):
        forecast = sliding_window_predict(arrivals, schedule, args.tau, k)
        targets = {a.node: a.arrival_time for a in arrivals[k + 1 : k + 1 + args.ahead]}
        predicted = {i: t for i, t in forecast.predicted().items() if i in targets}
        if not predicted:
            continue
        window_runs.append(
            {
                "arrival_index": k,
                "t_now": arrivals[k].arrival_time,
                "rms_next": prediction_rms(predicted, targets),
                "degenerate": forecast.degenerate,
            }
        )
    if not window_runs:
        raise InsufficientArrivals(
            f"no sliding-window evaluations possible with tau={args.tau}, "
            f"ahead={args.ahead} and {len(arrivals)} arrivals"
        )
    mean_window_rms = float(np.mean([w["rms_next"] for w in window_runs]))
    # a near-zero full-fit RMS leaves no error to reduce
    reduction = 1.0 - mean_window_rms / fit.rms if fit.rms > 1e-9 else None
    payload = {
        "origin": node_ids[origin],
        "threshold": threshold,
        "tau": args.tau,
        "ahead": args.ahead,
        "arrivals": [{"node_id": node_ids[a.node], "time": a.arrival_time} for a in arrivals],
        "full_fit": fit.to_dict(),
        "window": {"runs": window_runs, "mean_rms": mean_window_rms},
        "rms_reduction": reduction,
    }
    _write_json(_out(args, "forecast.json"), payload)
    rows = [
        [
            node_ids[a.node],
            repr(float(origin_dist[a.node])),
            repr(a.arrival_time),
            repr(fit.slope * float(origin_dist[a.node]) + fit.intercept),
        ]
        for a in arrivals
        if np.isfinite(origin_dist[a.node])
    ]
    _write_csv(
        _out(args, "scatter.csv"),
        ["node_id", "effective_distance", "actual_arrival", "predicted_arrival"],
        rows,
    )
    if args.gnuplot:
        _emit_scatter_gnuplot(args)
    tail = f"({100 * reduction:.0f}% reduction)" if reduction is not None else "(baseline fits exactly)"
    print(f"full-fit RMS {fit.rms:.3f} vs window mean RMS {mean_window_rms:.3f} {tail}")
    return EXIT_OK


def cmd_validate_data(args) -> int:
    checks = []

    def record(name, ok, detail):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})

    if not args.populations:
        raise ValidationError("validate-data requires --populations")
    node_ids, populations = load_populations(args.populations)
    record("populations", True, f"{len(node_ids)} nodes, all positive")

    if args.flows:
        schedule = load_flows(args.flows, node_ids, populations, args.aggregation_days)
        worst = 0.0
        for _, net in schedule.periods:
            out = net.flows.sum(axis=0)
            gap = np.abs(out - net.flows.sum(axis=1))
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(out > 0, gap / out, 0.0)
            worst = max(worst, float(rel.max(initial=0.0)))
        record("flows_balance", worst < 1e-9, f"worst relative imbalance {worst:.3e}")
        connected = all(is_strongly_connected(net) for _, net in schedule.periods)
        record("flows_connectivity", connected,
               "every period strongly connected" if connected
               else "some period is not strongly connected")

    if args.cases:
        cases = load_cases(args.cases)
        ok = cases.node_ids == tuple(node_ids)
        record("cases_nodes", ok, "case nodes match populations" if ok
               else "case nodes do not match populations file")
        record("cases_monotone", True, f"{cases.days} days, nondecreasing per node")

    all_ok = all(c["ok"] for c in checks)
    _write_json(_out(args, "validation.json"), {"ok": all_ok, "checks": checks})
    for c in checks:
        print(f"{'ok  ' if c['ok'] else 'FAIL'} {c['check']}: {c['detail']}")
    return EXIT_OK if all_ok else EXIT_VALIDATION


# ---------------------------------------------------------------- plumbing

def _emit_trajectory_gnuplot(args, node_ids) -> None:
    lines = [
        "set datafile separator ','",
        "set key outside",
        "set xlabel 'time'",
        "set ylabel 'infected fraction'",
        "plot \\",
    ]
    for i, nid in enumerate(node_ids):
        tail = ", \\" if i < len(node_ids) - 1 else ""
        lines.append(
            f"  '< grep -E \"^[^,]+,{nid},\" trajectory.csv' using 1:5 "
            f"with lines title '{nid}'{tail}"
        )
    _atomic_write(_out(args, "trajectory.gp"), lambda fh: fh.write("\n".join(lines) + "\n"))


def _emit_scatter_gnuplot(args) -> None:
    script = "\n".join(
        [
            "set datafile separator ','",
            "set xlabel 'effective distance from origin'",
            "set ylabel 'arrival time'",
            "plot 'scatter.csv' every ::1 using 2:3 with points title 'actual', \\",
            "     'scatter.csv' every ::1 using 2:4 with lines title 'full fit'",
        ]
    )
    _atomic_write(_out(args, "scatter.gp"), lambda fh: fh.write(script + "\n"))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--seed", type=int, default=0, help="random seed for noisy runs")
    parser.add_argument("--config", help="JSON file of default option values")
    parser.add_argument("--gnuplot", action="store_true",
                        help="also emit gnuplot scripts referencing the CSV outputs")


def _add_system_inputs(parser: argparse.ArgumentParser, with_params: bool = True) -> None:
    parser.add_argument("--demo", choices=["five-node"], help="use a bundled system")
    parser.add_argument("--populations", help="populations CSV (node_id,population)")
    parser.add_argument("--flows", help="flows CSV (date,from_id,to_id,trips)")
    parser.add_argument("--aggregation-days", type=int, default=7,
                        help="flow averaging window in days")
    if with_params:
        parser.add_argument("--params",
                            help="rates CSV (node_id,beta,sigma,delta,alpha)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epiflows",
        description="Networked SEIRS epidemics driven by travel flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the dynamics and write a trajectory")
    _add_common(p)
    _add_system_inputs(p)
    p.add_argument("--mode", choices=["continuous", "discrete"], default="discrete")
    p.add_argument("--t-end", type=float, default=300.0, help="continuous horizon")
    p.add_argument("--step", type=float, default=0.01, help="RK4 step size")
    p.add_argument("--steps", type=int, default=300, help="number of Euler steps")
    p.add_argument("--h", type=float, default=1.0, help="Euler sampling interval")
    p.add_argument("--noise-std", type=float, default=0.0,
                   help="observation noise standard deviation")
    p.add_argument("--initial", choices=["demo", "healthy", "seeded"], default="demo")
    p.add_argument("--seed-node", help="node receiving the initial exposure")
    p.add_argument("--seed-exposed", type=float, default=1e-3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", help="classify the healthy state, optionally solve endemic")
    _add_common(p)
    _add_system_inputs(p)
    p.add_argument("--marginal-band", type=float, default=1e-9)
    p.add_argument("--endemic", action="store_true", help="also solve for the endemic state")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--max-iterations", type=int, default=10_000)
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--perturb-scale", type=float, default=None,
                   help="report eigenvalue drift for theta = scale * gamma")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("estimate", help="recover spread rates from observations")
    _add_common(p)
    _add_system_inputs(p, with_params=False)
    p.add_argument("--observations", help="trajectory CSV of state observations")
    p.add_argument("--cases", help="cumulative case CSV; states are inferred")
    p.add_argument("--solver", choices=["nnls", "pseudo_inverse"], default="nnls")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("distance", help="effective distances from a node or group")
    _add_common(p)
    _add_system_inputs(p, with_params=False)
    p.add_argument("--source", help="single source node id")
    p.add_argument("--infected", help="comma-separated node ids forming the group")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("predict", help="arrival times: full-fit baseline vs sliding window")
    _add_common(p)
    _add_system_inputs(p, with_params=False)
    p.add_argument("--observations", help="trajectory CSV carrying the infection signal")
    p.add_argument("--cases", help="cumulative case CSV (arrival = first reported case)")
    p.add_argument("--threshold", type=float, default=1e-3)
    p.add_argument("--tau", type=int, default=20, help="training window size in arrivals")
    p.add_argument("--ahead", type=int, default=10, help="arrivals predicted per window")
    p.add_argument("--origin", help="origin node id for the full-fit baseline")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate-data", help="check input files against model assumptions")
    _add_common(p)
    p.add_argument("--populations", help="populations CSV")
    p.add_argument("--flows", help="flows CSV")
    p.add_argument("--cases", help="cases CSV")
    p.add_argument("--aggregation-days", type=int, default=7)
    p.set_defaults(func=cmd_validate_data)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ValidationError("config must be a JSON object")
        # config supplies defaults; explicit command-line flags win
        defaults = {k: v for k, v in overrides.items() if k.replace("-", "_") in vars(args)}
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise ValidationError(f"config has unknown keys: {sorted(unknown)}")
        explicit = _explicit_flags(argv)
        for key, value in defaults.items():
            dest = key.replace("-", "_")
            if dest not in explicit:
                setattr(args, dest, value)
    return args


def _explicit_flags(argv: list[str]) -> set[str]:
    flags = set()
    for token in argv:
        if token.startswith("--"):
            flags.add(token[2:].split("=", 1)[0].replace("-", "_"))
    return flags


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
        return args.func(args)
    except ValidationError as exc:
        return _fail(exc, EXIT_VALIDATION)
    except ComputationError as exc:
        return _fail(exc, EXIT_COMPUTATION)
    except EpiflowsError as exc:
        return _fail(exc, EXIT_VALIDATION)
    except OSError as exc:
        return _fail(exc, EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
