"""File ingestion and SEIRS state inference from cumulative case counts.

CSV schemas (UTF-8, header row, ISO-8601 dates):
  populations: node_id, population
  flows:       date, from_id, to_id, trips
  cases:       node_id, date, cumulative_cases

State inference assigns each confirmed case to a contiguous run of
compartments: exposed for ``exposure_lead`` days before confirmation,
infectious for ``infectious_duration`` days starting at confirmation, then
recovered for ``immunity_duration`` days, after which the individual returns
to susceptible.
"""
from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass

import numpy as np

from .errors import (
    CasesExceedPopulation,
    EmptySchedule,
    NonPositivePopulation,
    ParseError,
    UnknownNode,
    ValidationError,
)
from .estimation import ObservationSeries
from .network import NetworkSchedule, balance_flows, build_network


@dataclass(frozen=True)
class CaseSeries:
    """Daily cumulative confirmed cases per node."""

    node_ids: tuple[str, ...]
    dates: tuple[datetime.date, ...]
    cumulative: np.ndarray  # (days, n)

    def __post_init__(self):
        if self.cumulative.shape != (len(self.dates), len(self.node_ids)):
            raise ParseError(
                f"cumulative shape {self.cumulative.shape} does not match "
                f"{len(self.dates)} dates x {len(self.node_ids)} nodes"
            )
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise ParseError(f"dates must be consecutive days; gap at {a} -> {b}")
        if np.any(self.cumulative < 0):
            raise ParseError("cumulative cases must be nonnegative")
        if np.any(np.diff(self.cumulative, axis=0) < 0):
            raise ParseError("cumulative cases must be nondecreasing per node")

    @property
    def days(self) -> int:
        return len(self.dates)

    def daily_increments(self) -> np.ndarray:
        """New confirmations per day; cases already present on the first day
        count as confirmed on that day."""
        out = np.empty_like(self.cumulative)
        out[0] = self.cumulative[0]
        out[1:] = np.diff(self.cumulative, axis=0)
        return out


@dataclass(frozen=True)
class StateInferenceConfig:
    exposure_lead: int = 7
    infectious_duration: int = 7
    immunity_duration: int = 42

    def __post_init__(self):
        for name in ("exposure_lead", "infectious_duration", "immunity_duration"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValidationError(f"{name} must be a positive integer")


def _open_reader(path, required: set[str]):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        fh.close()
        raise ParseError(f"{path}: expected header with columns {sorted(required)}")
    return fh, reader


def load_populations(path) -> tuple[tuple[str, ...], np.ndarray]:
    fh, reader = _open_reader(path, {"node_id", "population"})
    node_ids: list[str] = []
    pops: list[float] = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            nid = row["node_id"]
            if nid in node_ids:
                raise ParseError(f"{path}:{lineno}: duplicate node_id {nid!r}")
            try:
                value = float(row["population"])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: bad population {row['population']!r}") from exc
            if value <= 0:
                raise NonPositivePopulation(f"{path}:{lineno}: population must be positive")
            node_ids.append(nid)
            pops.append(value)
    if not node_ids:
        raise ParseError(f"{path}: no data rows")
    return tuple(node_ids), np.array(pops)


def _parse_date(text: str, where: str) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad ISO date {text!r}") from exc


def load_flows(
    path,
    node_ids,
    populations,
    aggregation_days: int = 7,
) -> NetworkSchedule:
    """Aggregate daily trip counts into a schedule of balanced flow networks.

    Trips are summed over consecutive windows of ``aggregation_days`` and
    divided by the window length to yield daily flows, which are then
    scale-balanced before network construction. Rows with from_id == to_id
    (intra-node trips) do not enter the model and are skipped.
    """
    if aggregation_days < 1:
        raise ValidationError("aggregation_days must be >= 1")
    node_ids = tuple(node_ids)
    index = {nid: i for i, nid in enumerate(node_ids)}
    fh, reader = _open_reader(path, {"date", "from_id", "to_id", "trips"})
    entries: list[tuple[datetime.date, int, int, float]] = []
    with fh:
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            date = _parse_date(row["date"], where)
            for key in ("from_id", "to_id"):
                if row[key] not in index:
                    raise UnknownNode(f"{where}: unknown node {row[key]!r}")
            try:
                trips = float(row["trips"])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{where}: bad trips value {row['trips']!r}") from exc
            if trips < 0:
                raise ParseError(f"{where}: trips must be nonnegative")
            src, dst = index[row["from_id"]], index[row["to_id"]]
            if src == dst:
                continue
            entries.append((date, src, dst, trips))
    if not entries:
        raise EmptySchedule(f"{path}: no usable flow rows")

    n = len(node_ids)
    first = min(e[0] for e in entries)
    last = max(e[0] for e in entries)
    n_windows = ((last - first).days // aggregation_days) + 1
    sums = np.zeros((n_windows, n, n))
    for date, src, dst, trips in entries:
        w = (date - first).days // aggregation_days
        sums[w, dst, src] += trips

    periods = []
    total_days = (last - first).days + 1
    for w in range(n_windows):
        span = min(aggregation_days, total_days - w * aggregation_days)
        daily = sums[w] / span
        balanced = balance_flows(daily, method="scale")
        periods.append((float(span), build_network(node_ids, populations, balanced)))
    return NetworkSchedule(periods=tuple(periods))


def load_cases(path) -> CaseSeries:
    fh, reader = _open_reader(path, {"node_id", "date", "cumulative_cases"})
    per_node: dict[str, dict[datetime.date, float]] = {}
    with fh:
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            date = _parse_date(row["date"], where)
            try:
                count = float(row["cumulative_cases"])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{where}: bad case count {row['cumulative_cases']!r}") from exc
            node = per_node.setdefault(row["node_id"], {})
            if date in node:
                raise ParseError(f"{where}: duplicate entry for {row['node_id']!r} on {date}")
            node[date] = count
    if not per_node:
        raise ParseError(f"{path}: no data rows")
    node_ids = tuple(per_node)
    all_dates = sorted({d for series in per_node.values() for d in series})
    data = np.zeros((len(all_dates), len(node_ids)))
    for i, nid in enumerate(node_ids):
        series = per_node[nid]
        for k, d in enumerate(all_dates):
            if d not in series:
                raise ParseError(f"{path}: node {nid!r} is missing {d}")
            data[k, i] = series[d]
    return CaseSeries(node_ids=node_ids, dates=tuple(all_dates), cumulative=data)


def infer_states(
    cases: CaseSeries,
    populations,
    config: StateInferenceConfig | None = None,
    schedule: NetworkSchedule | None = None,
) -> ObservationSeries:
    """Turn cumulative confirmed cases into daily SEIRS fraction observations.

    A case confirmed on day c occupies E on [c - lead, c - 1], I on
    [c, c + dur - 1] and R on [c + dur, c + dur + imm - 1]; everyone else is
    susceptible. Confirmations after the end of the series are unknown, so
    exposed counts taper near the final days.
    """
    config = config or StateInferenceConfig()
    populations = np.asarray(populations, dtype=float)
    if populations.shape != (len(cases.node_ids),):
        raise ParseError("populations length does not match case series nodes")

    lead = config.exposure_lead
    dur = config.infectious_duration
    imm = config.immunity_duration
    days = cases.days
    new = cases.daily_increments()
    # csum[t] = cases confirmed on days [0, t); clamp handles both ends
    csum = np.zeros((days + 1, len(cases.node_ids)))
    np.cumsum(new, axis=0, out=csum[1:])

    def confirmed_between(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Cases confirmed on days [lo, hi] (inclusive), clamped to the series."""
        lo = np.clip(lo, 0, days)
        hi = np.clip(hi + 1, 0, days)
        return csum[np.maximum(hi, lo)] - csum[lo]

    t = np.arange(days)
    e_count = confirmed_between(t + 1, t + lead)
    i_count = confirmed_between(t - dur + 1, t)
    r_count = confirmed_between(t - dur - imm + 1, t - dur)

    active = e_count + i_count + r_count
    over = active.max(axis=0) - populations
    if np.any(over > 0):
        worst = int(np.argmax(over))
        raise CasesExceedPopulation(
            f"node {cases.node_ids[worst]!r} has {active[:, worst].max():.0f} "
            f"active cases but population {populations[worst]:.0f}"
        )

    e = e_count / populations
    x = i_count / populations
    r = r_count / populations
    s = 1.0 - e - x - r
    data = np.stack([s, e, x, r], axis=1)  # (days, 4, n)
    return ObservationSeries(
        h=1.0,
        times=np.arange(days, dtype=float),
        data=data,
        schedule=schedule,
    )
