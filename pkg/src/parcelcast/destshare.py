"""Destination shares of unordered volume, and allocation of the unordered forecast.

``d[t, j]`` is the share of period-``t`` unordered arrivals at the target hub
that are bound for destination ``j``. Shares start from aggregate history and
are then blended with each newly observed share vector ``rho``::

    convention "algorithm":  d <- (1 - alpha) * d + alpha * rho
    convention "prose":      d <- alpha * d + (1 - alpha) * rho

Periods with no unordered arrivals keep their previous shares.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import datastore
from .datastore import IntervalSpec
from .errors import ConfigError, DataError, ShapeError

CONVENTIONS = ("algorithm", "prose")
DEFAULT_ALPHA = 0.3
_RENORM_TOL = 1e-12


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")


@dataclass(frozen=True)
class DestShareState:
    shares: np.ndarray  # (T+1, J)
    destinations: tuple[str, ...]
    alpha: float = DEFAULT_ALPHA
    convention: str = "algorithm"
    n_updates: int = 0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be one of {CONVENTIONS}")
        if not self.destinations:
            raise ConfigError("destination set is empty")
        if self.shares.ndim != 2 or self.shares.shape[1] != len(self.destinations):
            raise ShapeError(f"shares shape {self.shares.shape} does not match {len(self.destinations)} destinations")

    @property
    def n_periods(self) -> int:
        return self.shares.shape[0]


def _normalize(d: np.ndarray) -> np.ndarray:
    sums = d.sum(axis=1, keepdims=True)
    drift = np.abs(sums - 1.0) > _RENORM_TOL
    return np.where(drift, d / np.where(sums > 0, sums, 1.0), d)


def initialize_shares(history, destinations, alpha: float = DEFAULT_ALPHA,
                      convention: str = "algorithm") -> DestShareState:
    """Aggregate destination counts over the history divided by the aggregate total per period.

    ``history`` is ``(n_obs, T+1, J)`` or a single ``(T+1, J)`` observation.
    Periods with no volume in the whole history get uniform shares.
    """
    destinations = tuple(destinations)
    if not destinations:
        raise ConfigError("destination set is empty")
    h = np.asarray(history, dtype=float)
    if h.ndim == 2:
        h = h[None]
    if h.ndim != 3 or h.shape[0] == 0:
        raise DataError("initialisation history is empty")
    if h.shape[2] != len(destinations):
        raise ShapeError(f"history has {h.shape[2]} destination columns for {len(destinations)} destinations")
    if (h < 0).any():
        raise DataError("negative counts in history")
    counts = h.sum(axis=0)
    totals = counts.sum(axis=1, keepdims=True)
    uniform = np.full_like(counts, 1.0 / len(destinations))
    shares = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), uniform)
    return DestShareState(_normalize(shares), destinations, alpha, convention)


def update_shares(state: DestShareState, observation, alpha: float | None = None) -> DestShareState:
    """Blend one observed ``(T+1, J)`` count matrix into the shares."""
    alpha = state.alpha if alpha is None else alpha
    _check_alpha(alpha)
    obs = np.asarray(observation, dtype=float)
    if obs.shape != state.shares.shape:
        raise ShapeError(f"observation shape {obs.shape} != shares shape {state.shares.shape}")
    if (obs < 0).any():
        raise DataError("negative counts in observation")
    totals = obs.sum(axis=1, keepdims=True)
    seen = totals > 0
    rho = obs / np.where(seen, totals, 1.0)
    d = state.shares
    if state.convention == "algorithm":
        blended = (1.0 - alpha) * d + alpha * rho
    else:
        blended = alpha * d + (1.0 - alpha) * rho
    shares = np.where(seen, _normalize(blended), d)
    return replace(state, shares=shares, alpha=alpha, n_updates=state.n_updates + 1)


def allocate(u_hat, state: DestShareState) -> np.ndarray:
    """Per-destination unordered forecast ``u_hat[t] * d[t, j]``, shape ``(T+1, J)``."""
    u = np.asarray(u_hat, dtype=float)
    if u.shape != (state.n_periods,):
        raise ShapeError(f"forecast has shape {u.shape}, shares cover {state.n_periods} periods")
    return u[:, None] * state.shares


def destinations_through(log, hub: str) -> tuple[str, ...]:
    """Sorted destinations of every parcel whose path includes ``hub``."""
    return tuple(sorted(set(log.hub_index(hub).destination.tolist())))


def unordered_by_destination(log, hub: str, spec: IntervalSpec, destinations) -> np.ndarray:
    """Observed unordered arrivals per period and destination, ``(T+1, J)`` integer counts."""
    datastore._check_window(log, spec)
    idx = log.hub_index(hub)
    lo, hi = np.searchsorted(idx.arrival, [spec.t_o, spec.window_end], side="left")
    keep = idx.order_time[lo:hi] > spec.t_o
    bins = (idx.arrival[lo:hi][keep] - spec.t_o) // spec.I
    dest = idx.destination[lo:hi][keep]
    col = {d: j for j, d in enumerate(destinations)}
    out = np.zeros((spec.n_periods, len(destinations)), dtype=np.int64)
    for b, d in zip(bins.tolist(), dest.tolist()):
        if d not in col:
            raise DataError(f"destination {d!r} is not in the destination set")
        out[b, col[d]] += 1
    return out


def replay(log, hub: str, spec_template: IntervalSpec, init_t_os, update_t_os, destinations=None,
           alpha: float = DEFAULT_ALPHA, convention: str = "algorithm"):
    """Initialise on ``init_t_os`` and update once per ``update_t_os`` without look-ahead.

    At observation time ``t_o`` the newest fully observed window is the one
    issued at ``t_o - (T+1) * I``; that window is the update applied. Returns
    the list of ``(t_o, state)`` after each update.
    """
    destinations = tuple(destinations) if destinations is not None else destinations_through(log, hub)
    span = spec_template.n_periods * spec_template.I
    init_t_os = list(init_t_os)
    if not init_t_os:
        raise DataError("no initialisation observation times")
    history = np.array([unordered_by_destination(log, hub, spec_template.at(t), destinations) for t in init_t_os])
    state = initialize_shares(history, destinations, alpha, convention)
    out = []
    for t_o in update_t_os:
        source = t_o - span
        obs = unordered_by_destination(log, hub, spec_template.at(source), destinations)
        state = update_shares(state, obs)
        out.append((t_o, state))
    return out


def format_shares(state: DestShareState, t_o: int | None = None) -> str:
    head = f"# parcelcast-shares v1 alpha={state.alpha} convention={state.convention}"
    if t_o is not None:
        head += f" t_o={t_o}"
    lines = [head, "\t".join(["t", *state.destinations])]
    for t, row in enumerate(state.shares):
        lines.append("\t".join([str(t), *(f"{v:.12f}" for v in row)]))
    return "\n".join(lines) + "\n"


def write_shares(path, state: DestShareState, t_o: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_shares(state, t_o))


def read_shares(path) -> tuple[np.ndarray, tuple[str, ...]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    header = lines[0].split("\t")
    rows = [ln.split("\t")[1:] for ln in lines[1:] if ln]
    return np.array(rows, dtype=float), tuple(header[1:])
