"""Trip-record ingestion, weekly calibration and synthetic economies.

Locations in trip files are 1-based community-area ids; everything inside
the package is 0-based.  Durations are in hours and prices in dollars.
"""

from __future__ import annotations

import csv
import heapq
import logging
from collections import defaultdict
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.csgraph import shortest_path

from .economy import Economy, Phantom

log = logging.getLogger(__name__)

CHICAGO_COLUMNS = {
    "start": "Trip Start Timestamp",
    "pickup": "Pickup Community Area",
    "dropoff": "Dropoff Community Area",
    "seconds": "Trip Seconds",
    "miles": "Trip Miles",
    "fare": "Fare",
    "extra": "Additional Charges",
}
TIMESTAMP_FORMATS = ("%m/%d/%Y %I:%M:%S %p", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S",
                     "%Y-%m-%dT%H:%M:%S.%f")

# community areas (1-based): the North Side and downtown feeding the area
# just south of the Loop
EVENT_SOURCES = (5, 6, 7, 21, 22, 8, 32)
EVENT_SINK = 33
EVENT_THRESHOLD = 300

VALUE_PER_HOUR = 60.0
COST_PER_HOUR = 20.0
OUTLIER_FACTOR = 30.0


class DataError(ValueError):
    """Input data cannot be turned into an economy."""


@dataclass(frozen=True)
class TripRecord:
    start: datetime
    pickup: int | None
    dropoff: int | None
    duration_seconds: float | None
    distance_miles: float | None
    fare: float
    additional_charges: float = 0.0

    @property
    def price(self) -> float:
        return self.fare + self.additional_charges

    @property
    def hours(self) -> float | None:
        return None if self.duration_seconds is None else self.duration_seconds / 3600.0


@dataclass
class ParseStats:
    rows: int = 0
    kept: int = 0
    missing_area: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "kept": self.kept, "missing_area": self.missing_area,
                "row_errors": len(self.errors),
                "errors": [{"line": ln, "message": msg} for ln, msg in self.errors[:100]]}


def _parse_time(text: str) -> datetime:
    for fmt in TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unrecognized timestamp {text!r}")


def _opt_float(text: str, name: str) -> float | None:
    text = text.strip().replace(",", "")
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"non-numeric {name} {text!r}") from None


def _opt_area(text: str) -> int | None:
    text = text.strip()
    if not text:
        return None
    return int(float(text))


def parse_trips(source: str | Path | Iterable[str], columns: Mapping[str, str] | None = None,
                stats: ParseStats | None = None) -> Iterator[TripRecord]:
    """Stream typed trip records from CSV text.

    ``columns`` maps the keys of :data:`CHICAGO_COLUMNS` to header names.
    Rows lacking an area are counted and skipped; malformed rows are recorded
    in ``stats.errors`` with their line number.  A missing required column
    raises :class:`DataError` before any row is read.
    """
    mapping = {**CHICAGO_COLUMNS, **(columns or {})}
    stats = stats if stats is not None else ParseStats()
    close = None
    if isinstance(source, (str, Path)):
        close = open(source, newline="")
        lines = close
    else:
        lines = source
    try:
        reader = csv.DictReader(lines)
        header = reader.fieldnames or []
        required = [mapping[k] for k in ("start", "pickup", "dropoff", "fare")]
        for name in required:
            if name not in header:
                raise DataError(f"missing required column {name!r}")
        optional = {k: mapping[k] for k in ("seconds", "miles", "extra") if mapping[k] in header}
        for row in reader:
            stats.rows += 1
            line = reader.line_num
            try:
                pickup = _opt_area(row[mapping["pickup"]] or "")
                dropoff = _opt_area(row[mapping["dropoff"]] or "")
                if pickup is None or dropoff is None:
                    stats.missing_area += 1
                    continue
                seconds = _opt_float(row.get(optional.get("seconds", ""), "") or "", "duration")
                miles = _opt_float(row.get(optional.get("miles", ""), "") or "", "distance")
                fare = _opt_float(row[mapping["fare"]] or "", "fare")
                extra = _opt_float(row.get(optional.get("extra", ""), "") or "", "additional charges")
                if fare is None:
                    raise ValueError("missing fare")
                if seconds is not None and seconds <= 0:
                    seconds = None
                record = TripRecord(_parse_time(row[mapping["start"]]), pickup, dropoff,
                                    seconds, miles, fare, extra or 0.0)
                if record.price < 0:
                    raise ValueError("negative price")
            except (ValueError, TypeError) as exc:
                stats.errors.append((line, str(exc)))
                continue
            stats.kept += 1
            yield record
    finally:
        if close is not None:
            close.close()


# ---------------------------------------------------------------------------
# windows and weeks


@dataclass(frozen=True)
class WeekWindow:
    """A weekly time window; ``weekday`` follows ``datetime.weekday`` (Wed = 2)."""

    weekday: int = 2
    start_hour: float = 7.0
    end_hour: float = 8.0

    @property
    def hours(self) -> float:
        return self.end_hour - self.start_hour

    def contains(self, when: datetime) -> bool:
        hour = when.hour + when.minute / 60 + when.second / 3600
        return when.weekday() == self.weekday and self.start_hour <= hour < self.end_hour


def week_key(when: datetime) -> tuple[int, int]:
    iso = when.isocalendar()
    return (iso[0], iso[1])


def in_window(records: Iterable[TripRecord], window: WeekWindow) -> list[TripRecord]:
    return [r for r in records if window.contains(r.start)]


def group_by_week(records: Iterable[TripRecord]) -> dict[tuple[int, int], list[TripRecord]]:
    weeks: dict[tuple[int, int], list[TripRecord]] = defaultdict(list)
    for r in records:
        weeks[week_key(r.start)].append(r)
    return dict(sorted(weeks.items()))


def drop_outliers(records: list[TripRecord], factor: float = OUTLIER_FACTOR) -> tuple[list[TripRecord], int]:
    """Drop trips longer than ``factor`` times their OD's median distance."""
    dist = defaultdict(list)
    for r in records:
        if r.distance_miles is not None:
            dist[(r.pickup, r.dropoff)].append(r.distance_miles)
    median = {k: float(np.median(v)) for k, v in dist.items()}
    kept = [r for r in records
            if r.distance_miles is None or not r.distance_miles > factor * median[(r.pickup, r.dropoff)]]
    return kept, len(records) - len(kept)


# ---------------------------------------------------------------------------
# durations


def impute_durations(observed: NDArray) -> NDArray:
    """Fill unobserved entries (NaN) by shortest paths over observed edges.

    An unobserved self-trip ``(i, i)`` takes the shortest round trip through
    another location.  Raises :class:`DataError` listing the OD pairs that
    no path reaches.
    """
    observed = np.asarray(observed, dtype=float)
    n = observed.shape[0]
    graph = np.where(np.isnan(observed), 0.0, observed)
    np.fill_diagonal(graph, 0.0)
    # csgraph treats 0 as "no edge", so keep tiny observed durations
    graph[(graph == 0) & ~np.isnan(observed) & ~np.eye(n, dtype=bool)] = 1e-12
    sp = shortest_path(graph, method="D", directed=True)
    d = np.where(np.isnan(observed), sp, observed)
    for i in np.flatnonzero(np.isnan(np.diag(observed))):
        loops = sp[i, :] + sp[:, i]
        loops[i] = np.inf
        d[i, i] = loops.min()
    bad = np.argwhere(~np.isfinite(d))
    if bad.size:
        pairs = [(int(i) + 1, int(j) + 1) for i, j in bad[:20]]
        raise DataError(f"cannot impute durations for OD pairs {pairs}"
                        + (" ..." if len(bad) > 20 else ""))
    return d


def mean_durations(records: Iterable[TripRecord], n: int) -> NDArray:
    """Trip-weighted mean duration in hours per OD; NaN where none observed."""
    total = np.zeros((n, n))
    count = np.zeros((n, n))
    for r in records:
        if r.hours is None:
            continue
        total[r.pickup - 1, r.dropoff - 1] += r.hours
        count[r.pickup - 1, r.dropoff - 1] += 1
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


# ---------------------------------------------------------------------------
# minimum supply


def min_supply_flow(x_obs: ArrayLike, d: ArrayLike) -> tuple[float, NDArray]:
    """Cheapest balanced driver flow covering ``x_obs``; returns ``(m, y)``.

    The relocation ``z = y - x_obs`` moves each location's excess arrivals to
    locations with excess departures.  Successive shortest paths with node
    potentials on the complete graph with arc costs ``d``.
    """
    x = np.asarray(x_obs, dtype=float)
    d = np.asarray(d, dtype=float)
    n = x.shape[0]
    if np.any(x < 0):
        raise ValueError("observed flows must be nonnegative")
    excess = x.sum(axis=0) - x.sum(axis=1)  # arrivals minus departures
    supply = np.maximum(excess, 0.0)
    demand = np.maximum(-excess, 0.0)
    scale = 1e-12 * max(1.0, float(x.sum()))
    z = np.zeros((n, n))
    cost = d.copy()
    np.fill_diagonal(cost, np.inf)
    potential = np.zeros(n)
    while supply.max(initial=0.0) > scale and demand.max(initial=0.0) > scale:
        # Dijkstra from all supply nodes on the residual graph
        dist = np.full(n, np.inf)
        prev = np.full(n, -1)
        heap = []
        for s in np.flatnonzero(supply > scale):
            dist[s] = 0.0
            heap.append((0.0, int(s)))
        heapq.heapify(heap)
        done = np.zeros(n, dtype=bool)
        while heap:
            du, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            forward = cost[u] + potential[u] - potential
            backward = np.where(z[:, u] > scale, -cost[:, u] + potential[u] - potential, np.inf)
            reduced = np.minimum(forward, backward)
            reduced = np.maximum(reduced, 0.0)
            cand = du + reduced
            better = (cand < dist) & ~done
            for v in np.flatnonzero(better):
                dist[v] = cand[v]
                prev[v] = u
                heapq.heappush(heap, (cand[v], int(v)))
        sinks = np.flatnonzero((demand > scale) & np.isfinite(dist))
        if sinks.size == 0:
            break
        t = int(sinks[np.argmin(dist[sinks])])
        potential = potential + np.where(np.isfinite(dist), dist, dist[np.isfinite(dist)].max())
        path = [t]
        while prev[path[-1]] >= 0:
            path.append(int(prev[path[-1]]))
        path.reverse()
        amount = min(supply[path[0]], demand[t])
        arcs = []
        for u, v in zip(path, path[1:]):
            # prefer cancelling reverse flow when it is the cheaper residual arc
            if z[v, u] > scale and -cost[v, u] <= cost[u, v]:
                arcs.append((v, u, -1.0))
                amount = min(amount, z[v, u])
            else:
                arcs.append((u, v, 1.0))
        for a, b, sign in arcs:
            z[a, b] += sign * amount
        supply[path[0]] -= amount
        demand[t] -= amount
    z = np.maximum(z, 0.0)
    y = x + z
    return float((d * y).sum()), y


def min_supply(x_obs: ArrayLike, d: ArrayLike) -> float:
    """Smallest driver supply that serves ``x_obs`` with balanced flows."""
    return min_supply_flow(x_obs, d)[0]


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationParams:
    value_per_hour: float = VALUE_PER_HOUR
    cost_per_hour: float = COST_PER_HOUR
    outlier_factor: float = OUTLIER_FACTOR


@dataclass(frozen=True)
class WeeklyEconomySpec:
    week: tuple[int, int] | None
    x_obs: NDArray
    p_obs: NDArray
    d: NDArray
    m: float
    excluded: bool = False

    def to_dict(self) -> dict:
        return {"week": list(self.week) if self.week else None, "n": self.x_obs.shape[0],
                "x_obs": self.x_obs.ravel().tolist(),
                "p_obs": np.where(np.isnan(self.p_obs), 0.0, self.p_obs).ravel().tolist(),
                "d": self.d.ravel().tolist(), "m": self.m, "excluded": self.excluded}


def calibrate(x_obs: ArrayLike, p_obs: ArrayLike, d: ArrayLike, m: float | None = None,
              params: CalibrationParams = CalibrationParams()) -> Economy:
    """Exponential demand through the observed (flow, price) points.

    ``theta = value_per_hour * d`` and ``Q = x_obs * exp(p_obs / theta)``;
    zero demand where nothing was observed.  ``m`` defaults to the minimum
    supply that serves ``x_obs``.
    """
    x = np.asarray(x_obs, dtype=float)
    d = np.asarray(d, dtype=float)
    p = np.nan_to_num(np.asarray(p_obs, dtype=float), nan=0.0)
    theta = params.value_per_hour * d
    Q = np.where(x > 0, x * np.exp(p / theta), 0.0)
    if m is None:
        m = min_supply(x, d)
    return Economy(m, d, params.cost_per_hour * d, Q, theta, time_unit="hour")


def observed_flows(records: Iterable[TripRecord], n: int, hours: float) -> tuple[NDArray, NDArray]:
    """Trips per hour and trip-weighted mean price per OD (NaN where unseen)."""
    count = np.zeros((n, n))
    paid = np.zeros((n, n))
    for r in records:
        count[r.pickup - 1, r.dropoff - 1] += 1
        paid[r.pickup - 1, r.dropoff - 1] += r.price
    with np.errstate(invalid="ignore"):
        p_obs = np.where(count > 0, paid / np.maximum(count, 1), np.nan)
    return count / hours, p_obs


def build_week_economy(records: Iterable[TripRecord], window: WeekWindow = WeekWindow(),
                       params: CalibrationParams = CalibrationParams(), *, n: int = 77,
                       durations: NDArray | None = None, week: tuple[int, int] | None = None,
                       n_weeks: int | None = None) -> tuple[Economy, WeeklyEconomySpec]:
    """Calibrate one economy from the trips in ``window``.

    With ``week`` set, only that ISO week is used; otherwise the trips of all
    weeks are pooled and flows are averaged over ``n_weeks`` (default: the
    number of distinct weeks seen).  ``durations`` defaults to the mean over
    the supplied records with shortest-path imputation.
    """
    records = list(records)
    for r in records:
        if not (1 <= r.pickup <= n and 1 <= r.dropoff <= n):
            raise DataError(f"area id out of range 1..{n}: ({r.pickup}, {r.dropoff})")
    records, dropped = drop_outliers(records, params.outlier_factor)
    if durations is None:
        durations = impute_durations(mean_durations(records, n))
    focal = in_window(records, window)
    if week is not None:
        focal = [r for r in focal if week_key(r.start) == week]
        n_weeks = 1
    if not focal:
        raise DataError("no trips in the focal window")
    if n_weeks is None:
        n_weeks = len({week_key(r.start) for r in focal})
    x_obs, p_obs = observed_flows(focal, n, window.hours * n_weeks)
    m = min_supply(x_obs, durations)
    economy = calibrate(x_obs, p_obs, durations, m, params)
    log.info("calibrated %d trips (%d outliers dropped), m=%.1f", len(focal), dropped, m)
    return economy, WeeklyEconomySpec(week, x_obs, p_obs, durations, m)


def build_weekly_economies(records: Iterable[TripRecord], window: WeekWindow = WeekWindow(),
                           params: CalibrationParams = CalibrationParams(), *, n: int = 77,
                           excluded: Iterable[tuple[int, int]] = ()) -> list[tuple[Economy, WeeklyEconomySpec]]:
    """One economy per ISO week, with durations pooled over every record."""
    records, _ = drop_outliers(list(records), params.outlier_factor)
    durations = impute_durations(mean_durations(records, n))
    excluded = set(excluded)
    out = []
    for key, week_records in group_by_week(in_window(records, window)).items():
        economy, spec = build_week_economy(week_records, window, params, n=n,
                                           durations=durations, week=key)
        out.append((economy, WeeklyEconomySpec(key, spec.x_obs, spec.p_obs, spec.d, spec.m,
                                               key in excluded)))
    return out


def detect_event_days(records: Iterable[TripRecord], sources: Iterable[int] = EVENT_SOURCES,
                      sink: int = EVENT_SINK, threshold: int = EVENT_THRESHOLD,
                      window: WeekWindow | None = WeekWindow()) -> set[tuple[int, int]]:
    """ISO weeks whose focal-window trips from ``sources`` into ``sink`` exceed ``threshold``."""
    sources = set(sources)
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for r in records:
        if window is not None and not window.contains(r.start):
            continue
        if r.pickup in sources and r.dropoff == sink:
            counts[week_key(r.start)] += 1
    return {k for k, v in counts.items() if v > threshold}


# ---------------------------------------------------------------------------
# synthetic economies


def example1() -> Economy:
    """Two locations (residential, downtown), minutes as the time unit."""
    d = np.array([[10.0, 20.0], [20.0, 10.0]])
    Q = np.array([[0.0, 10.0], [0.0, 20.0]])
    theta = np.array([[1.0, 40.0], [1.0, 10.0]])
    return Economy(240.0, d, np.zeros((2, 2)), Q, theta, time_unit="minute")


def example1_phantom() -> Phantom:
    return Phantom.uniform(2, 24.0, 5.0, 4)


def example2() -> Economy:
    """Three locations with unit durations and zero costs."""
    Q = np.array([[1.0, 1.0, 4.0], [4.0, 4.0, 1.0], [1.0, 1.0, 1.0]])
    theta = np.array([[30.0, 30.0, 1.0], [1.0, 1.0, 30.0], [30.0, 30.0, 30.0]])
    return Economy(8.6, np.ones((3, 3)), np.zeros((3, 3)), Q, theta)


def example2_phantom() -> Phantom:
    return Phantom.uniform(3, 10.0, 1.0, 4)


def random_economy(n: int, seed: int = 0, imbalance: float = 0.5, *,
                   zero_fraction: float = 0.0) -> Economy:
    """Seeded random economy with a tunable one-way commuting pattern.

    ``imbalance`` in [0, 1] shifts demand mass from trips towards location 0
    to trips into it; ``zero_fraction`` blanks that share of off-diagonal
    demand curves.  Supply is the minimum that serves the demand at 80% of
    the mean rider value.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, size=(n, 2))
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d = 0.1 + dist + rng.uniform(0, 0.05, size=(n, n))
    np.fill_diagonal(d, 0.1 + rng.uniform(0, 0.05, size=n))
    theta = rng.uniform(20, 60, size=(n, n)) * d
    Q = rng.uniform(1, 10, size=(n, n))
    Q[:, 0] *= 1 + 4 * imbalance
    Q[0, :] *= 1 - 0.8 * imbalance
    if zero_fraction > 0:
        blank = rng.uniform(size=(n, n)) < zero_fraction
        np.fill_diagonal(blank, False)
        Q[blank] = 0.0
    c = rng.uniform(0, 10, size=(n, n)) * d
    x_ref = Q * np.exp(-0.8)
    m = min_supply(x_ref, d)
    return Economy(m, d, c, Q, theta)


def chicago_surrogate(seed: int = 2020, n: int = 77, *, commute_share: float = 0.3,
                      trips_per_hour: float = 6000.0) -> tuple[Economy, Phantom, WeeklyEconomySpec]:
    """A morning-rush city calibrated exactly like the trip-data pipeline.

    Residential areas fan out from a lakefront downtown.  A ``commute_share``
    of trips flows inward by a gravity model on downtown jobs; the rest is
    short local travel.  Downtown therefore accumulates drivers while outer
    areas run short.  Observed flows and rounded prices are generated, then
    passed through :func:`calibrate` with the minimum supply.
    """
    rng = np.random.default_rng(seed)
    core = 4
    angle = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size=n - core)
    radius = rng.uniform(2.0, 14.0, size=n - core)
    pts = np.vstack([rng.normal(0, 0.6, size=(core, 2)),
                     np.column_stack([-0.6 * radius * np.cos(angle), radius * np.sin(angle)])])
    miles = 1.3 * np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    np.fill_diagonal(miles, rng.uniform(0.6, 1.2, size=n))
    d = (6.0 + 2.6 * miles + rng.uniform(0, 2, size=(n, n))) / 60.0

    homes = rng.lognormal(0.0, 0.6, size=n)
    homes[:core] *= 0.4
    jobs = rng.lognormal(-1.0, 0.8, size=n)
    jobs[:core] = rng.uniform(30, 60, size=core)
    commute = np.outer(homes, jobs) * np.exp(-miles / 5.0)
    local = np.outer(homes + jobs / 10, homes + jobs / 10) * np.exp(-miles / 3.0)
    x_obs = (commute_share * commute / commute.sum()
             + (1 - commute_share) * local / local.sum()) * trips_per_hour
    x_obs[x_obs < 0.03] = 0.0
    price = 2.5 * np.round((3.0 + 0.9 * miles + 15.0 * d) / 2.5)
    p_obs = np.where(x_obs > 0, price, np.nan)
    m = min_supply(x_obs, d)
    economy = calibrate(x_obs, p_obs, d, m)
    phantom = Phantom.uniform(n, 500.0, 3.0, 4)
    return economy, phantom, WeeklyEconomySpec(None, x_obs, p_obs, d, m)


def synthetic_economy(spec: str | Mapping) -> Economy:
    """Build a named or seeded synthetic economy.

    ``spec`` is ``"example1"``, ``"example2"``, ``"chicago"`` or a mapping
    ``{"kind": "random", "n": 4, "seed": 7, "imbalance": 0.5}``.
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "random")
    if kind == "example1":
        return example1()
    if kind == "example2":
        return example2()
    if kind == "chicago":
        return chicago_surrogate(int(spec.get("seed", 2020)))[0]
    if kind == "random":
        return random_economy(int(spec.get("n", 4)), int(spec.get("seed", 0)),
                              float(spec.get("imbalance", 0.5)),
                              zero_fraction=float(spec.get("zero_fraction", 0.0)))
    raise ValueError(f"unknown synthetic economy {kind!r}")


def synthetic_phantom(spec: str | Mapping, economy: Economy) -> Phantom:
    """Default phantom demand matching :func:`synthetic_economy`."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "random")
    if kind == "example1":
        return example1_phantom()
    if kind == "example2":
        return example2_phantom()
    if kind == "chicago":
        return chicago_surrogate(int(spec.get("seed", 2020)))[1]
    K = float(spec.get("phantom_K", 2.0 * economy.m / economy.d.min()))
    return Phantom.uniform(economy.n, K, float(spec.get("phantom_r_max", 2.0)), 4)


def synthetic_trips(economy_flows: NDArray, prices: NDArray, durations: NDArray,
                    start: datetime, weeks: int = 1, seed: int = 0,
                    window: WeekWindow = WeekWindow()) -> list[TripRecord]:
    """Trip records whose windowed counts reproduce ``economy_flows`` per hour."""
    rng = np.random.default_rng(seed)
    out = []
    first = start + timedelta(days=(window.weekday - start.weekday()) % 7)
    for w in range(weeks):
        day = first + timedelta(weeks=w)
        for i, j in np.argwhere(economy_flows > 0):
            count = int(round(economy_flows[i, j] * window.hours))
            for _ in range(count):
                minute = rng.uniform(0, window.hours * 60)
                when = day.replace(hour=int(window.start_hour), minute=0, second=0) + timedelta(minutes=minute)
                when = when.replace(second=0, microsecond=0)
                out.append(TripRecord(when, int(i) + 1, int(j) + 1,
                                      float(durations[i, j] * 3600), 1.0, float(prices[i, j]), 0.0))
    return out




def synthetic_weeks(weeks: int = 8, seed: int = 2020, noise: float = 0.15,
                    n: int = 77) -> list[tuple[Economy, WeeklyEconomySpec]]:
    """Week-by-week economies around :func:`chicago_surrogate`.

    Each week rescales the observed flows by seeded lognormal noise and is
    recalibrated on its own, including its own minimum supply.
    """
    _, _, base = chicago_surrogate(seed, n)
    rng = np.random.default_rng(seed + 1)
    out = []
    for t in range(weeks):
        level = 1.0 + 0.1 * np.sin(2 * np.pi * t / max(weeks, 1))
        x = base.x_obs * level * rng.lognormal(0.0, noise, size=base.x_obs.shape)
        x = np.where(base.x_obs > 0, x, 0.0)
        m = min_supply(x, base.d)
        economy = calibrate(x, base.p_obs, base.d, m)
        out.append((economy, WeeklyEconomySpec((2020, t + 1), x, base.p_obs, base.d, m)))
    return out


def write_trips_csv(path: str | Path, records: Iterable[TripRecord],
                    columns: Mapping[str, str] = CHICAGO_COLUMNS) -> None:
    """Write records in the trip-CSV schema read by :func:`parse_trips`."""
    keys = ("start", "pickup", "dropoff", "seconds", "miles", "fare", "extra")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([columns[k] for k in keys])
        for r in records:
            writer.writerow([r.start.strftime(TIMESTAMP_FORMATS[0]),
                             "" if r.pickup is None else r.pickup,
                             "" if r.dropoff is None else r.dropoff,
                             "" if r.duration_seconds is None else repr(r.duration_seconds),
                             "" if r.distance_miles is None else repr(r.distance_miles),
                             repr(r.fare), repr(r.additional_charges)])
