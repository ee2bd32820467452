"""Event-log queries: interval binning, Type I/II split, snapshots, ANN features.

Conventions used everywhere:

* period ``t`` relative to observation time ``t_o`` covers
  ``[t_o + t*I, t_o + (t+1)*I)`` (left-closed, right-open);
* a parcel with ``order_time <= t_o`` is ordered (Type II) at ``t_o``,
  otherwise unordered (Type I);
* "previous day" features are computed at observation time ``t_o - 1440``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import simnet
from .errors import ColdStartError, DataError
from .simnet import MINUTES_PER_DAY, ParcelRecord

RECENT_WINDOW_MINUTES = 240
# previous-day window plus the 4-hour recent window
MIN_HISTORY_MINUTES = MINUTES_PER_DAY + RECENT_WINDOW_MINUTES
NEVER = np.iinfo(np.int64).max


@dataclass(frozen=True)
class IntervalSpec:
    I: int = 15
    T: int = 95
    t_o: int = 0

    def __post_init__(self):
        if self.I <= 0 or self.T < 0:
            raise ValueError(f"invalid interval spec I={self.I}, T={self.T}")

    @property
    def n_periods(self) -> int:
        return self.T + 1

    @property
    def window_end(self) -> int:
        return self.t_o + self.n_periods * self.I

    def at(self, t_o: int) -> IntervalSpec:
        return IntervalSpec(self.I, self.T, t_o)


@dataclass
class ArrivalSeries:
    hub: str
    spec: IntervalSpec
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.spec.n_periods,) or (self.counts < 0).any():
            raise ValueError("counts must be T+1 non-negative integers")


@dataclass(frozen=True)
class SnapshotEntry:
    parcel_id: str
    location: str
    remaining_path: tuple[str, ...]
    elapsed: int

    @property
    def on_route(self) -> bool:
        return simnet.is_route(self.location)


@dataclass
class ObservationSnapshot:
    t_o: int
    target_hub: str
    entries: list[SnapshotEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class FeatureVector:
    prev_day_unordered: np.ndarray
    recent_totals: np.ndarray
    static: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.prev_day_unordered, self.recent_totals, self.static]).astype(float)


@dataclass
class _HubIndex:
    arrival: np.ndarray   # sorted arrival minute at the hub, NEVER if not reached inside the log
    order_time: np.ndarray
    destination: np.ndarray
    record: np.ndarray    # positions into EventLog.records


class EventLog:
    """Immutable parcel log covering ``[start, end)`` minutes with per-hub indexes."""

    def __init__(self, records, end: int, start: int = 0, start_weekday: int = 0, hubs=None):
        self.records: list[ParcelRecord] = list(records)
        self.start = int(start)
        self.end = int(end)
        self.start_weekday = int(start_weekday)
        if hubs is None:
            hubs = {h for r in self.records for h in r.path}
        self.hubs = frozenset(hubs)
        self._indexes: dict[str, _HubIndex] = {}
        self._by_id = None

    @classmethod
    def load(cls, path, hubs=None) -> EventLog:
        records, meta = simnet.read_log(path)
        return cls(records, end=meta["end"], start=meta.get("start", 0),
                   start_weekday=meta.get("weekday", 0), hubs=hubs)

    @property
    def n_days(self) -> int:
        return (self.end - self.start) // MINUTES_PER_DAY

    def record(self, parcel_id: str) -> ParcelRecord:
        if self._by_id is None:
            self._by_id = {r.parcel_id: r for r in self.records}
        return self._by_id[parcel_id]

    def hub_index(self, hub: str) -> _HubIndex:
        if hub not in self.hubs:
            raise KeyError(f"unknown hub {hub!r}")
        if hub not in self._indexes:
            arrival, order_time, dest, rec = [], [], [], []
            for i, r in enumerate(self.records):
                if hub not in r.path:
                    continue
                a = r.hub_arrival(hub)
                arrival.append(NEVER if a is None else a)
                order_time.append(r.order_time)
                dest.append(r.destination)
                rec.append(i)
            arrival = np.array(arrival, dtype=np.int64)
            order = np.argsort(arrival, kind="stable")
            self._indexes[hub] = _HubIndex(
                arrival=arrival[order],
                order_time=np.array(order_time, dtype=np.int64)[order],
                destination=np.array(dest, dtype=object)[order],
                record=np.array(rec, dtype=np.int64)[order],
            )
        return self._indexes[hub]

    def arrival_counts(self, hub: str, start: int, n_bins: int, interval: int, ordered_by=None, unordered_after=None):
        """Arrivals at ``hub`` in ``n_bins`` bins from ``start``; no range checking.

        ``ordered_by=t`` keeps parcels with ``order_time <= t``,
        ``unordered_after=t`` keeps parcels with ``order_time > t``.
        """
        idx = self.hub_index(hub)
        lo, hi = np.searchsorted(idx.arrival, [start, start + n_bins * interval], side="left")
        arr = idx.arrival[lo:hi]
        if ordered_by is not None or unordered_after is not None:
            ot = idx.order_time[lo:hi]
            keep = np.ones(arr.size, dtype=bool)
            if ordered_by is not None:
                keep &= ot <= ordered_by
            if unordered_after is not None:
                keep &= ot > unordered_after
            arr = arr[keep]
        return np.bincount((arr - start) // interval, minlength=n_bins).astype(np.int64)


def _check_window(log: EventLog, spec: IntervalSpec) -> None:
    if spec.t_o < log.start or spec.window_end > log.end:
        raise DataError(
            f"window [{spec.t_o}, {spec.window_end}) lies outside the log range [{log.start}, {log.end})"
        )


def bin_arrivals(log: EventLog, hub: str, spec: IntervalSpec) -> ArrivalSeries:
    """Total arrivals at ``hub`` per period of ``spec``."""
    _check_window(log, spec)
    return ArrivalSeries(hub, spec, log.arrival_counts(hub, spec.t_o, spec.n_periods, spec.I))


def unordered_target(log: EventLog, hub: str, spec: IntervalSpec) -> ArrivalSeries:
    """Arrivals per period of parcels not yet ordered at ``spec.t_o``."""
    _check_window(log, spec)
    counts = log.arrival_counts(hub, spec.t_o, spec.n_periods, spec.I, unordered_after=spec.t_o)
    return ArrivalSeries(hub, spec, counts)


def ordered_arrivals(log: EventLog, hub: str, spec: IntervalSpec) -> ArrivalSeries:
    """Arrivals per period of parcels already ordered at ``spec.t_o`` (actual o_t)."""
    _check_window(log, spec)
    counts = log.arrival_counts(hub, spec.t_o, spec.n_periods, spec.I, ordered_by=spec.t_o)
    return ArrivalSeries(hub, spec, counts)


def snapshot(log: EventLog, t_o: int, target_hub: str) -> ObservationSnapshot:
    """In-network parcels headed for ``target_hub`` as seen at ``t_o``.

    Members are exactly the parcels with ``order_time <= t_o`` whose path
    contains ``target_hub`` and whose arrival there is later than ``t_o``.
    """
    if not log.start <= t_o <= log.end:
        raise DataError(f"observation time {t_o} outside log range [{log.start}, {log.end}]")
    idx = log.hub_index(target_hub)
    first = np.searchsorted(idx.arrival, t_o, side="right")
    members = idx.record[first:][idx.order_time[first:] <= t_o]
    entries = [_locate(log.records[i], t_o, target_hub) for i in np.sort(members)]
    return ObservationSnapshot(t_o, target_hub, entries)


def _locate(record: ParcelRecord, t_o: int, target_hub: str) -> SnapshotEntry:
    current = None
    for event in record.events:
        if event.arrival > t_o:
            break
        current = event
    if current is None:
        raise DataError(f"{record.parcel_id}: ordered at {record.order_time} but no event by {t_o}")
    if simnet.is_route(current.location):
        next_hub = simnet.split_route(current.location)[1]
    else:
        next_hub = current.location
    path = record.path
    remaining = path[path.index(next_hub): path.index(target_hub) + 1]
    return SnapshotEntry(record.parcel_id, current.location, remaining, t_o - current.arrival)


def calendar_encoding(t_o: int, interval: int = 15, start_weekday: int = 0, log_start: int = 0) -> np.ndarray:
    """Period-of-day index, hour of day, then a one-hot day of week (Monday first)."""
    minutes = t_o - log_start
    day, minute = divmod(minutes, MINUTES_PER_DAY)
    onehot = np.zeros(7)
    onehot[(start_weekday + day) % 7] = 1.0
    return np.concatenate([[minute // interval, minute // 60], onehot]).astype(float)


def _check_history(log: EventLog, t_o: int) -> None:
    if t_o - log.start < MIN_HISTORY_MINUTES:
        raise ColdStartError(
            f"observation time {t_o} needs {MIN_HISTORY_MINUTES} minutes of history (log starts at {log.start})"
        )


def build_features(log: EventLog, hub: str, t_o: int, spec: IntervalSpec) -> FeatureVector:
    """Inputs of the unordered-parcel network at ``t_o``.

    All entries are computable from events at or before ``t_o``.
    """
    _check_history(log, t_o)
    prev = log.arrival_counts(hub, t_o - MINUTES_PER_DAY, spec.n_periods, spec.I,
                              unordered_after=t_o - MINUTES_PER_DAY)
    return FeatureVector(prev, _recent_totals(log, hub, t_o, spec.I), calendar_encoding(t_o, spec.I, log.start_weekday, log.start))


def build_total_features(log: EventLog, hub: str, t_o: int, spec: IntervalSpec) -> FeatureVector:
    """Same layout as ``build_features`` but the previous-day block holds total arrivals."""
    _check_history(log, t_o)
    prev = log.arrival_counts(hub, t_o - MINUTES_PER_DAY, spec.n_periods, spec.I)
    return FeatureVector(prev, _recent_totals(log, hub, t_o, spec.I), calendar_encoding(t_o, spec.I, log.start_weekday, log.start))


def _recent_totals(log, hub, t_o, interval):
    n = RECENT_WINDOW_MINUTES // interval
    return log.arrival_counts(hub, t_o - n * interval, n, interval)


def feature_names(spec: IntervalSpec) -> list[str]:
    n_recent = RECENT_WINDOW_MINUTES // spec.I
    return (
        [f"prev_day_{t}" for t in range(spec.n_periods)]
        + [f"recent_{k}" for k in range(n_recent)]
        + ["period_of_day", "hour_of_day"]
        + [f"dow_{d}" for d in range(7)]
    )


def write_feature_matrix(path, t_os, rows, names) -> None:
    """Write one feature row per observation time as tab-separated text with a header."""
    out = io.StringIO()
    out.write("t_o\t" + "\t".join(names) + "\n")
    for t_o, row in zip(t_os, rows):
        out.write(f"{int(t_o)}\t" + "\t".join(f"{v:.6g}" for v in row) + "\n")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def observation_times(log: EventLog, days, interval: int) -> list[int]:
    """Every ``interval``-aligned observation time inside the given day indices."""
    per_day = MINUTES_PER_DAY // interval
    return [log.start + d * MINUTES_PER_DAY + k * interval for d in days for k in range(per_day)]
