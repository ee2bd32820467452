"""Comparison forecasts: additive Holt-Winters and the previous-day naive forecast.

Holt-Winters recursions for observation ``y_t`` with season length ``m``::

    level    l_t = alpha * (y_t - s_{t-m}) + (1 - alpha) * (l_{t-1} + b_{t-1})
    trend    b_t = beta * (l_t - l_{t-1}) + (1 - beta) * b_{t-1}
    season   s_t = gamma * (y_t - l_t) + (1 - gamma) * s_{t-m}

The seasonal buffer is kept rotated so that ``seasonals[0]`` is the
component for the next observation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .datastore import IntervalSpec
from .errors import ColdStartError, ConfigError, DataError
from .simnet import MINUTES_PER_DAY

DEFAULT_GRID = tuple(float(v) for v in np.round(np.arange(0.05, 0.96, 0.15), 2))
# beta = 0 keeps the initial trend fixed; without it any trend update is
# extrapolated across the whole 96-step horizon
TREND_GRID = (0.0,) + DEFAULT_GRID


@dataclass(frozen=True)
class HoltWintersState:
    level: float
    trend: float
    seasonals: tuple[float, ...]
    alpha: float = 0.5
    beta: float = 0.1
    gamma: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not self.seasonals:
            raise ConfigError("seasonal buffer is empty")

    @property
    def m(self) -> int:
        return len(self.seasonals)

    def with_params(self, alpha, beta, gamma) -> HoltWintersState:
        return replace(self, alpha=alpha, beta=beta, gamma=gamma)


def hw_init(history, m: int, alpha=0.5, beta=0.1, gamma=0.1) -> HoltWintersState:
    """Initial components from the first two seasons of ``history``.

    Level is the first-season mean, trend the difference of the two season
    means divided by ``m``, and each seasonal the phase-wise average of the
    deviations from the own season's mean.
    """
    y = np.asarray(history, dtype=float)
    if m < 1 or y.size < 2 * m:
        raise DataError(f"Holt-Winters initialisation needs >= {2 * m} observations, got {y.size}")
    first, second = y[:m], y[m:2 * m]
    level = first.mean()
    trend = (second.mean() - first.mean()) / m
    seasonals = ((first - first.mean()) + (second - second.mean())) / 2.0
    return HoltWintersState(float(level), float(trend), tuple(float(v) for v in seasonals), alpha, beta, gamma)


def hw_step(state: HoltWintersState, y: float) -> HoltWintersState:
    s_prev = state.seasonals[0]
    level = state.alpha * (y - s_prev) + (1 - state.alpha) * (state.level + state.trend)
    trend = state.beta * (level - state.level) + (1 - state.beta) * state.trend
    season = state.gamma * (y - level) + (1 - state.gamma) * s_prev
    return replace(state, level=level, trend=trend, seasonals=state.seasonals[1:] + (season,))


def hw_forecast(state: HoltWintersState, h: int, clamp: bool = True) -> float:
    """``h``-step-ahead forecast from the current state."""
    if h < 1:
        raise ValueError("h must be >= 1")
    value = state.level + h * state.trend + state.seasonals[(h - 1) % state.m]
    return max(0.0, value) if clamp else value


def hw_forecast_vector(state: HoltWintersState, n: int) -> np.ndarray:
    return np.array([hw_forecast(state, h) for h in range(1, n + 1)])


def _one_step_errors(y, m, alpha, beta, gamma, start, stop, init):
    # plain-float loop of the recursions; returns sum of |error| over [start, stop)
    level, trend = init.level, init.trend
    seas = list(init.seasonals)
    total = 0.0
    for k in range(stop):
        s_prev = seas[k % m]
        if k >= start:
            total += abs(y[k] - (level + trend + s_prev))
        new_level = alpha * (y[k] - s_prev) + (1 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1 - beta) * trend
        level = new_level
        seas[k % m] = gamma * (y[k] - level) + (1 - gamma) * s_prev
    return total


def fit_holt_winters(series, m: int, val_start: int, val_stop: int, grid=DEFAULT_GRID,
                     trend_grid=TREND_GRID) -> HoltWintersState:
    """Grid-search smoothing parameters minimising one-step MAE on ``series[val_start:val_stop]``.

    ``alpha`` and ``gamma`` range over ``grid``, ``beta`` over ``trend_grid``.
    Initial components come from the first two seasons; the recursions run
    from the first observation. Returns the initial state with the chosen
    parameters (ties go to the first grid point in lexicographic order).
    """
    y = [float(v) for v in series]
    if val_stop > len(y) or val_start < 2 * m or val_start >= val_stop:
        raise DataError("validation range must lie after the two initialisation seasons and inside the series")
    init = hw_init(y, m)
    best, best_err = None, np.inf
    for alpha, beta, gamma in itertools.product(grid, trend_grid, grid):
        err = _one_step_errors(y, m, alpha, beta, gamma, val_start, val_stop, init)
        if err < best_err:
            best, best_err = (float(alpha), float(beta), float(gamma)), err
    return init.with_params(*best)


def hw_walk_forward(state: HoltWintersState, series, origins, n_ahead: int) -> np.ndarray:
    """Forecast ``n_ahead`` steps from each origin index (observations ``series[:origin]`` consumed).

    ``origins`` must be increasing; the state is stepped through the series
    once and read out at each origin.
    """
    out = np.empty((len(origins), n_ahead))
    k = 0
    for row, origin in enumerate(origins):
        if origin < k:
            raise DataError("origins must be increasing")
        while k < origin:
            state = hw_step(state, float(series[k]))
            k += 1
        out[row] = hw_forecast_vector(state, n_ahead)
    return out


def naive_forecast(log, hub: str, spec: IntervalSpec) -> np.ndarray:
    """Previous day's actual arrivals in the same periods."""
    if spec.t_o - MINUTES_PER_DAY < log.start:
        raise ColdStartError(f"naive forecast at {spec.t_o} needs one full day of history")
    return log.arrival_counts(hub, spec.t_o - MINUTES_PER_DAY, spec.n_periods, spec.I).astype(float)
