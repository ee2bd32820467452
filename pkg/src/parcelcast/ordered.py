"""Type II forecast: predicted arrival times of in-network parcels, binned per period.

A parcel's predicted arrival at the target hub is the observation time plus
the predicted remaining time on its current segment plus full predicted
travel and dwell times for the rest of its path. The target hub contributes
no dwell. Time on the current segment is ``max(0, predicted - elapsed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import datastore, simnet
from .datastore import IntervalSpec, ObservationSnapshot, SnapshotEntry
from .errors import DataError, SequencingError
from .forest import TimeModels, fit_time_models
from .simnet import MINUTES_PER_DAY


@dataclass
class ArrivalEstimate:
    parcel_id: str
    predicted_arrival: float
    components: list[tuple[str, float]]


@dataclass
class OrderedForecast:
    spec: IntervalSpec
    counts: np.ndarray
    overflow: int
    n_parcels: int
    estimates: list[ArrivalEstimate] = field(default_factory=list, repr=False)

    @property
    def conserved(self) -> bool:
        return int(self.counts.sum()) + self.overflow == self.n_parcels


def predict_arrival(entry: SnapshotEntry, t_o: int, models: TimeModels, network=None) -> ArrivalEstimate:
    path = entry.remaining_path
    if not path:
        raise DataError(f"{entry.parcel_id}: empty remaining path")
    if network is not None:
        for a, b in zip(path[:-1], path[1:]):
            if (a, b) not in network.routes:
                raise DataError(f"{entry.parcel_id}: remaining path hop {a}->{b} is not a route")
    target = path[-1]
    entered = t_o - entry.elapsed
    components = []
    clock = float(t_o)

    def add(segment, minutes):
        nonlocal clock
        components.append((segment, minutes))
        clock += minutes

    # partial first segment; a parcel on a route then dwells at path[0] unless it is the target
    add(entry.location, max(0.0, models.predict_at(entry.location, entered) - entry.elapsed))
    if entry.on_route and path[0] != target:
        add(path[0], models.predict_at(path[0], clock))
    k = 0
    while path[k] != target:
        route = simnet.route_id(path[k], path[k + 1])
        add(route, models.predict_at(route, clock))
        k += 1
        if path[k] != target:
            add(path[k], models.predict_at(path[k], clock))
    return ArrivalEstimate(entry.parcel_id, t_o + sum(m for _, m in components), components)


def forecast_ordered(snap: ObservationSnapshot, target_hub: str, spec: IntervalSpec, models: TimeModels,
                     network=None, keep_estimates: bool = False) -> OrderedForecast:
    """Count predicted arrivals per period; estimates past the horizon go to ``overflow``."""
    if snap.t_o != spec.t_o:
        raise DataError(f"snapshot taken at {snap.t_o}, forecast issued at {spec.t_o}")
    if snap.target_hub != target_hub:
        raise DataError(f"snapshot is for {snap.target_hub}, not {target_hub}")
    counts = np.zeros(spec.n_periods, dtype=np.int64)
    overflow = 0
    estimates = []
    for entry in snap:
        est = predict_arrival(entry, spec.t_o, models, network)
        t = math.floor((est.predicted_arrival - spec.t_o) / spec.I)
        if t < spec.n_periods:
            counts[t] += 1
        else:
            overflow += 1
        if keep_estimates:
            estimates.append(est)
    return OrderedForecast(spec, counts, overflow, len(snap), estimates)


class RetrainSchedule:
    """Time models refitted on a fixed cadence (default once per day at midnight).

    ``models_at(t_o)`` returns models trained on visits finished before the
    most recent cadence boundary at or before ``t_o``.
    """

    def __init__(self, log, cadence_minutes: int = MINUTES_PER_DAY, **fit_kwargs):
        if cadence_minutes <= 0:
            raise ValueError("cadence must be positive")
        self.log = log
        self.cadence = cadence_minutes
        self.fit_kwargs = fit_kwargs
        self._boundary = None
        self._models = None

    def models_at(self, t_o: int) -> TimeModels:
        boundary = self.log.start + (t_o - self.log.start) // self.cadence * self.cadence
        if boundary != self._boundary:
            self._models = fit_time_models(self.log, boundary, **self.fit_kwargs)
            self._boundary = boundary
        return self._models


def dynamic_update(log, target_hub: str, spec_stream, models, network=None) -> list[OrderedForecast]:
    """Re-issue the ordered forecast at each observation time of ``spec_stream``.

    ``models`` is a ``TimeModels`` (held fixed) or a ``RetrainSchedule``.
    Observation times must advance by exactly one interval.
    """
    out = []
    previous = None
    for spec in spec_stream:
        if previous is not None and spec.t_o != previous.t_o + previous.I:
            raise SequencingError(f"observation time {spec.t_o} does not follow {previous.t_o} by {previous.I}")
        previous = spec
        current = models.models_at(spec.t_o) if isinstance(models, RetrainSchedule) else models
        snap = datastore.snapshot(log, spec.t_o, target_hub)
        out.append(forecast_ordered(snap, target_hub, spec, current, network))
    return out
