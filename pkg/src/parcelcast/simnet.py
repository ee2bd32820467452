"""Hub/route network model and a seeded synthetic parcel event-log generator.

The generator is a documented stand-in for a real parcel network: orders are
a piecewise-constant Poisson process per (origin, destination) access-hub pair,
parcels follow the shortest path hop by hop, dwell at each hub is gamma
distributed by hub kind and travel on each route is lognormal around a
congestion-adjusted base time. All timestamps are integer minutes since the
simulation start.

Configuration files are INI-style key/value files, see ``load_network_spec``
and ``load_sim_config`` for the recognised keys.
"""

from __future__ import annotations

import configparser
import heapq
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError

HUB_KINDS = ("access", "local", "gateway")
MINUTES_PER_DAY = 1440
LOG_FORMAT = "parcelcast-eventlog v1"
ROUTE_SEP = ">"


@dataclass(frozen=True)
class Hub:
    id: str
    kind: str
    label: str = ""

    def __post_init__(self):
        if self.kind not in HUB_KINDS:
            raise ConfigError(f"hub {self.id!r}: kind must be one of {HUB_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class Route:
    src: str
    dst: str
    base_travel_minutes: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ConfigError(f"route {self.src}->{self.dst} is a self loop")
        if not self.base_travel_minutes > 0:
            raise ConfigError(f"route {self.src}->{self.dst}: base_travel_minutes must be > 0")

    @property
    def id(self) -> str:
        return route_id(self.src, self.dst)


def route_id(src: str, dst: str) -> str:
    return f"{src}{ROUTE_SEP}{dst}"


def is_route(location: str) -> bool:
    return ROUTE_SEP in location


def split_route(location: str) -> tuple[str, str]:
    src, dst = location.split(ROUTE_SEP)
    return src, dst


@dataclass
class Network:
    hubs: dict[str, Hub]
    routes: dict[tuple[str, str], Route]
    feasible_paths: dict[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)

    def path(self, origin: str, destination: str) -> tuple[str, ...]:
        try:
            return self.feasible_paths[origin, destination]
        except KeyError:
            raise DataError(f"no feasible path {origin} -> {destination}") from None

    def hubs_of_kind(self, kind: str) -> list[str]:
        return sorted(h.id for h in self.hubs.values() if h.kind == kind)


@dataclass
class NetworkSpec:
    """Declarative network description: hubs plus undirected links."""

    hubs: list[Hub]
    links: list[tuple[str, str, float]]
    name: str = "network"


def load_network_spec(path) -> NetworkSpec:
    """Read a network spec file.

    Sections::

        [network]  name = <str>
        [hubs]     <hub id> = access | local | gateway [, label]
        [links]    <hub a>-<hub b> = <base travel minutes>

    Every link is undirected and becomes two directed routes.
    """
    parser = _read_ini(path)
    if not parser.has_section("hubs") or not parser.has_section("links"):
        raise ConfigError(f"{path}: network spec needs [hubs] and [links] sections")
    hubs = []
    for hub_id, value in parser.items("hubs"):
        kind, _, label = (part.strip() for part in value.partition(","))
        hubs.append(Hub(hub_id, kind, label or hub_id))
    links = []
    for key, value in parser.items("links"):
        if "-" not in key:
            raise ConfigError(f"{path}: link key {key!r} must look like A-B")
        a, b = (part.strip() for part in key.split("-", 1))
        links.append((a, b, _as_float(value, f"link {key}")))
    name = parser.get("network", "name", fallback=Path(path).stem)
    return NetworkSpec(hubs=hubs, links=links, name=name)


def build_network(spec: NetworkSpec) -> Network:
    ids = [h.id for h in spec.hubs]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate hub ids in network spec")
    hubs = {h.id: h for h in spec.hubs}
    counts = {kind: sum(h.kind == kind for h in spec.hubs) for kind in HUB_KINDS}
    if counts["gateway"] < 1 or counts["local"] < 1 or counts["access"] < 2:
        raise ConfigError(
            "network needs >= 1 gateway, >= 1 local and >= 2 access hubs, got "
            + ", ".join(f"{k}={v}" for k, v in counts.items())
        )

    routes: dict[tuple[str, str], Route] = {}
    for a, b, minutes in spec.links:
        for hub in (a, b):
            if hub not in hubs:
                raise ConfigError(f"unknown hub {hub!r} in link {a}-{b}")
        for src, dst in ((a, b), (b, a)):
            if (src, dst) in routes:
                raise ConfigError(f"duplicate link {a}-{b}")
            routes[src, dst] = Route(src, dst, float(minutes))

    network = Network(hubs=hubs, routes=routes)
    adjacency: dict[str, list[Route]] = {h: [] for h in sorted(hubs)}
    for (src, _), route in sorted(routes.items()):
        adjacency[src].append(route)
    for origin in sorted(hubs):
        reached = _shortest_paths(origin, adjacency)
        for destination in sorted(hubs):
            if destination == origin:
                continue
            if destination not in reached:
                raise ConfigError(f"network is disconnected: {destination} unreachable from {origin}")
            network.feasible_paths[origin, destination] = reached[destination]
    return network


def _shortest_paths(origin: str, adjacency) -> dict[str, tuple[str, ...]]:
    # heap order (cost, path) breaks cost ties by lexicographic hub sequence
    heap = [(0.0, (origin,))]
    done: dict[str, tuple[str, ...]] = {}
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done[node] = path
        for route in adjacency[node]:
            if route.dst not in done:
                heapq.heappush(heap, (cost + route.base_travel_minutes, path + (route.dst,)))
    return done


class Event(NamedTuple):
    location: str
    arrival: int
    departure: int | None


@dataclass(frozen=True)
class ParcelRecord:
    parcel_id: str
    order_time: int
    origin: str
    destination: str
    path: tuple[str, ...]
    events: tuple[Event, ...]

    @property
    def completed(self) -> bool:
        return bool(self.events) and self.events[-1].location == self.destination

    @property
    def in_transit(self) -> bool:
        return not self.completed

    def hub_arrival(self, hub: str) -> int | None:
        for event in self.events:
            if event.location == hub:
                return event.arrival
        return None


@dataclass
class SimConfig:
    """Parameters of the synthetic generator.

    ``hourly_profile`` holds 24 relative order intensities (rescaled to mean 1),
    ``weekday_factor`` 7 multipliers starting on Monday. The expected number of
    orders per day for pair (o, d) is
    ``base_rate_per_day * origin_weight[o] * destination_weight[d] * weekday_factor[dow]``.
    Piecewise-linear factors are lists of ``(hour, factor)`` knots over [0, 24].
    """

    horizon_days: int = 30
    interval_minutes: int = 15
    seed: int = 0
    start_weekday: int = 0
    base_rate_per_day: float = 20.0
    hourly_profile: tuple[float, ...] = (1.0,) * 24
    weekday_factor: tuple[float, ...] = (1.0,) * 7
    origin_weight: dict[str, float] = field(default_factory=dict)
    destination_weight: dict[str, float] = field(default_factory=dict)
    travel_sigma: float = 0.15
    congestion: tuple[tuple[float, float], ...] = ((0.0, 1.0), (24.0, 1.0))
    dwell_gamma: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"access": (3.0, 10.0), "local": (4.0, 12.5), "gateway": (6.0, 15.0)}
    )
    dwell_hour_factor: tuple[tuple[float, float], ...] = ((0.0, 1.0), (24.0, 1.0))
    dwell_weekday_factor: tuple[float, ...] = (1.0,) * 7

    def validate(self) -> None:
        if self.horizon_days < 1:
            raise ConfigError("horizon_days must be >= 1")
        if self.interval_minutes <= 0 or MINUTES_PER_DAY % self.interval_minutes:
            raise ConfigError("interval_minutes must be a positive divisor of 1440")
        if not 0 <= self.start_weekday <= 6:
            raise ConfigError("start_weekday must be in 0..6")
        if len(self.hourly_profile) != 24 or len(self.weekday_factor) != 7:
            raise ConfigError("hourly_profile needs 24 values and weekday_factor 7")
        if len(self.dwell_weekday_factor) != 7:
            raise ConfigError("dwell weekday_factor needs 7 values")
        rates = [self.base_rate_per_day, *self.hourly_profile, *self.weekday_factor,
                 *self.origin_weight.values(), *self.destination_weight.values()]
        if any(r < 0 for r in rates):
            raise ConfigError("demand rates and weights must be >= 0")
        if self.travel_sigma < 0:
            raise ConfigError("travel sigma must be >= 0")
        for kind, (shape, scale) in self.dwell_gamma.items():
            if kind not in HUB_KINDS or shape <= 0 or scale <= 0:
                raise ConfigError(f"bad dwell gamma for {kind!r}: ({shape}, {scale})")
        for knots in (self.congestion, self.dwell_hour_factor):
            hours = [h for h, _ in knots]
            if hours != sorted(hours) or hours[0] > 0 or hours[-1] < 24 or any(f <= 0 for _, f in knots):
                raise ConfigError("piecewise factors need increasing hours covering [0, 24] and factors > 0")

    def scaled(self, k: float) -> SimConfig:
        """Copy with every demand rate multiplied by ``k``."""
        from dataclasses import replace

        return replace(self, base_rate_per_day=self.base_rate_per_day * k)

    def pair_rates(self, network: Network) -> dict[tuple[str, str], float]:
        """Expected orders per (average) day for every access-hub pair."""
        access = network.hubs_of_kind("access")
        for hub in (*self.origin_weight, *self.destination_weight):
            if hub not in network.hubs:
                raise ConfigError(f"demand weight references unknown hub {hub!r}")
        return {
            (o, d): self.base_rate_per_day
            * self.origin_weight.get(o, 1.0)
            * self.destination_weight.get(d, 1.0)
            for o in access
            for d in access
            if o != d
        }


def load_sim_config(path, seed: int | None = None) -> SimConfig:
    """Read a simulation config file.

    Sections and keys::

        [sim]          horizon_days, interval_minutes, seed, start_weekday (0 = Monday)
        [demand]       base_rate_per_day, hourly_profile (24 comma-separated values),
                       weekday_factor (7 values, Monday first)
        [origin_weight], [destination_weight]   <hub id> = <multiplier>
        [travel]       sigma (lognormal noise), congestion (hour:factor knots)
        [dwell]        access / local / gateway = <gamma shape>, <gamma scale>;
                       hour_factor (hour:factor knots); weekday_factor (7 values)

    ``seed`` overrides the file's seed when given.
    """
    parser = _read_ini(path)
    cfg = SimConfig()
    if parser.has_section("sim"):
        sec = parser["sim"]
        cfg.horizon_days = _as_int(sec.get("horizon_days", cfg.horizon_days), "horizon_days")
        cfg.interval_minutes = _as_int(sec.get("interval_minutes", cfg.interval_minutes), "interval_minutes")
        cfg.seed = _as_int(sec.get("seed", cfg.seed), "seed")
        cfg.start_weekday = _as_int(sec.get("start_weekday", cfg.start_weekday), "start_weekday")
    if parser.has_section("demand"):
        sec = parser["demand"]
        cfg.base_rate_per_day = _as_float(sec.get("base_rate_per_day", cfg.base_rate_per_day), "base_rate_per_day")
        if "hourly_profile" in sec:
            cfg.hourly_profile = _float_list(sec["hourly_profile"], "hourly_profile")
        if "weekday_factor" in sec:
            cfg.weekday_factor = _float_list(sec["weekday_factor"], "weekday_factor")
    for name in ("origin_weight", "destination_weight"):
        if parser.has_section(name):
            setattr(cfg, name, {k: _as_float(v, f"{name}.{k}") for k, v in parser.items(name)})
    if parser.has_section("travel"):
        sec = parser["travel"]
        cfg.travel_sigma = _as_float(sec.get("sigma", cfg.travel_sigma), "travel.sigma")
        if "congestion" in sec:
            cfg.congestion = _knots(sec["congestion"], "travel.congestion")
    if parser.has_section("dwell"):
        sec = parser["dwell"]
        gamma = dict(cfg.dwell_gamma)
        for kind in HUB_KINDS:
            if kind in sec:
                values = _float_list(sec[kind], f"dwell.{kind}")
                if len(values) != 2:
                    raise ConfigError(f"dwell.{kind} needs '<shape>, <scale>'")
                gamma[kind] = (values[0], values[1])
        cfg.dwell_gamma = gamma
        if "hour_factor" in sec:
            cfg.dwell_hour_factor = _knots(sec["hour_factor"], "dwell.hour_factor")
        if "weekday_factor" in sec:
            cfg.dwell_weekday_factor = _float_list(sec["weekday_factor"], "dwell.weekday_factor")
    if seed is not None:
        cfg.seed = int(seed)
    cfg.validate()
    return cfg


def piecewise_linear(knots, hours):
    xs, ys = zip(*knots)
    return np.interp(hours, xs, ys)


def simulate(network: Network, cfg: SimConfig) -> list[ParcelRecord]:
    """Generate the parcel event log for ``cfg.horizon_days`` days.

    Order counts per (day, hour, pair) cell come from the Poisson inverse CDF
    at one uniform draw per cell, so scaling every rate up never lowers a
    cell's count. Journeys draw from a separate stream in parcel-id order.
    Events at or after the log end are cut; a hub event whose departure falls
    past the end keeps ``departure=None``.
    """
    cfg.validate()
    pair_rates = cfg.pair_rates(network)
    if not pair_rates or not any(pair_rates.values()):
        return []
    if not network.routes:
        raise ConfigError("network has no routes but demand is nonzero")

    demand_seq, journey_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    pairs = sorted(pair_rates)
    base = np.array([pair_rates[p] for p in pairs])
    profile = np.asarray(cfg.hourly_profile, dtype=float)
    if profile.sum() > 0:
        profile = profile * 24.0 / profile.sum()
    dows = (cfg.start_weekday + np.arange(cfg.horizon_days)) % 7
    day_factor = np.asarray(cfg.weekday_factor, dtype=float)[dows]
    # expected orders per (day, hour, pair) cell
    lam = day_factor[:, None, None] * (profile / 24.0)[None, :, None] * base[None, None, :]
    u = np.random.default_rng(demand_seq).random(lam.shape)
    u = np.clip(u, 1e-15, 1.0 - 1e-15)
    counts = np.where(lam > 0, stats.poisson.ppf(u, np.where(lam > 0, lam, 1.0)), 0).astype(np.int64)

    rng = np.random.default_rng(journey_seq)
    day_idx, hour_idx, pair_idx = np.nonzero(counts)
    reps = counts[day_idx, hour_idx, pair_idx]
    day_idx, hour_idx, pair_idx = (np.repeat(a, reps) for a in (day_idx, hour_idx, pair_idx))
    minute = rng.integers(0, 60, size=day_idx.size)
    order_times = day_idx * MINUTES_PER_DAY + hour_idx * 60 + minute
    order = np.lexsort((pair_idx, order_times))

    end = cfg.horizon_days * MINUTES_PER_DAY
    minutes_of_day = np.arange(MINUTES_PER_DAY) / 60.0
    tables = (
        piecewise_linear(cfg.dwell_hour_factor, minutes_of_day).tolist(),
        piecewise_linear(cfg.congestion, minutes_of_day).tolist(),
    )
    records = []
    for n, k in enumerate(order):
        origin, destination = pairs[pair_idx[k]]
        path = network.path(origin, destination)
        events = _journey(network, cfg, path, int(order_times[k]), rng, end, tables)
        records.append(ParcelRecord(f"P{n:07d}", int(order_times[k]), origin, destination, path, events))
    return records


def _journey(network, cfg, path, start, rng, end, tables) -> tuple[Event, ...]:
    dwell_factor, congestion = tables
    kinds = [network.hubs[h].kind for h in path]
    shapes = np.array([cfg.dwell_gamma[k][0] for k in kinds])
    scales = np.array([cfg.dwell_gamma[k][1] for k in kinds])
    dwell_draws = (rng.standard_gamma(shapes) * scales).tolist()
    noise = np.exp(cfg.travel_sigma * rng.standard_normal(len(path) - 1)).tolist()

    events = []
    t = start
    for i, hub in enumerate(path):
        arrival = t
        day, minute = divmod(arrival, MINUTES_PER_DAY)
        factor = dwell_factor[minute] * cfg.dwell_weekday_factor[(cfg.start_weekday + day) % 7]
        departure = arrival + max(1, int(round(dwell_draws[i] * factor)))
        if departure >= end:
            events.append(Event(hub, arrival, None))
            break
        events.append(Event(hub, arrival, departure))
        if i == len(path) - 1:
            break
        route = network.routes[hub, path[i + 1]]
        factor = congestion[departure % MINUTES_PER_DAY]
        travel = max(1, int(round(route.base_travel_minutes * factor * noise[i])))
        t = departure + travel
        if t >= end:
            events.append(Event(route.id, departure, None))
            break
        events.append(Event(route.id, departure, t))
    return tuple(events)


# --- event-log file -------------------------------------------------------

LOG_COLUMNS = ("parcel_id", "order_time", "origin", "destination", "path", "events")


def format_log(records: Iterable[ParcelRecord], end: int, seed: int | None = None, start_weekday: int = 0) -> str:
    """Serialise records to the tab-separated event-log format.

    Line 1 is ``# parcelcast-eventlog v1 start=0 end=<minutes> weekday=<0..6> [seed=<int>]``,
    line 2 the column names, then one parcel per line. ``path`` is
    ``|``-separated, ``events`` is ``;``-separated ``[location,arrival,departure]``
    with an empty departure when it lies past the log end. Route locations
    are written ``A>B``.
    """
    out = io.StringIO()
    header = f"# {LOG_FORMAT} start=0 end={int(end)} weekday={int(start_weekday)}"
    if seed is not None:
        header += f" seed={int(seed)}"
    out.write(header + "\n")
    out.write("\t".join(LOG_COLUMNS) + "\n")
    for r in records:
        events = ";".join(
            f"[{e.location},{e.arrival},{'' if e.departure is None else e.departure}]" for e in r.events
        )
        out.write(f"{r.parcel_id}\t{r.order_time}\t{r.origin}\t{r.destination}\t{'|'.join(r.path)}\t{events}\n")
    return out.getvalue()


def write_log(path, records, end: int, seed: int | None = None, start_weekday: int = 0) -> None:
    Path(path).write_text(format_log(records, end, seed, start_weekday), encoding="utf-8")


def read_log(path) -> tuple[list[ParcelRecord], dict[str, int]]:
    """Parse an event-log file; returns the records and the header fields."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(f"# {LOG_FORMAT}"):
        raise DataError(f"{path}: not a {LOG_FORMAT} file")
    meta = {}
    for token in lines[0][len(f"# {LOG_FORMAT}"):].split():
        key, _, value = token.partition("=")
        meta[key] = int(value)
    if "end" not in meta:
        raise DataError(f"{path}: header lacks end=")
    records = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        try:
            pid, order_time, origin, destination, path_field, events_field = line.split("\t")
            events = []
            for chunk in events_field.split(";"):
                loc, arr, dep = chunk.strip("[]").split(",")
                events.append(Event(loc, int(arr), int(dep) if dep else None))
            records.append(
                ParcelRecord(pid, int(order_time), origin, destination, tuple(path_field.split("|")), tuple(events))
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
    return records, meta


# --- helpers ---------------------------------------------------------------

def _read_ini(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parser


def _as_float(value, name) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None


def _as_int(value, name) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected an integer, got {value!r}") from None


def _float_list(text, name) -> tuple[float, ...]:
    return tuple(_as_float(v, name) for v in text.replace("\n", " ").replace(",", " ").split())


def _knots(text, name) -> tuple[tuple[float, float], ...]:
    knots = []
    for item in text.replace("\n", " ").replace(",", " ").split():
        hour, sep, factor = item.partition(":")
        if not sep:
            raise ConfigError(f"{name}: knot {item!r} must be hour:factor")
        knots.append((_as_float(hour, name), _as_float(factor, name)))
    return tuple(knots)
