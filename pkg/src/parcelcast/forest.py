"""Random-forest regression for hub dwell times and route travel times.

Trees are CART regressors grown on bootstrap resamples. Each split maximises
the reduction of the squared-error sum over a random subset of ``m``
features; numeric features split on ``x <= v`` and categorical features on
``x == v`` for some observed value ``v``. Leaves predict the mean target.

Growth works on the distinct feature rows of the sample, each carrying the
bootstrap multiplicity, target sum and target square sum of the samples it
stands for. Identical rows can never be separated by a split, so this is
the same tree as the one grown sample by sample.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import simnet
from .errors import DataError, ShapeError, TrainingError
from .simnet import MINUTES_PER_DAY

FOREST_FORMAT = "parcelcast-forest v1"
TIME_FEATURES = ("time_of_day", "day_of_week")
TIME_CATEGORICAL = (False, True)


@dataclass
class RegressionTree:
    """Pre-order node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


@dataclass
class Forest:
    trees: list[RegressionTree]
    m: int
    categorical: tuple[bool, ...]
    feature_names: tuple[str, ...] = ()

    @property
    def n_features(self) -> int:
        return len(self.categorical)


@dataclass(frozen=True)
class TimeSample:
    entity: str
    time_of_day: int
    day_of_week: int
    target: float

    def __post_init__(self):
        if not self.target > 0:
            raise ValueError("dwell/travel targets must be positive")


def default_m(d: int) -> int:
    return max(1, d // 3)


def fit(x, y, K: int = 100, m: int | None = None, min_leaf: int = 5, seed: int = 0,
        categorical=None, bootstrap: bool = True, feature_names=()) -> Forest:
    """Grow ``K`` trees; each draws its own bootstrap sample from one seeded stream."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise TrainingError("cannot fit a forest on an empty sample set")
    n, d = x.shape
    if y.shape != (n,):
        raise ShapeError(f"targets have shape {y.shape}, expected ({n},)")
    m = default_m(d) if m is None else m
    if K < 1 or not 1 <= m <= d:
        raise TrainingError(f"need K >= 1 and 1 <= m <= {d}, got K={K}, m={m}")
    if min_leaf < 1:
        raise TrainingError("min_leaf must be >= 1")
    categorical = tuple(bool(c) for c in (categorical if categorical is not None else (False,) * d))
    if len(categorical) != d:
        raise ShapeError("categorical mask length must equal the feature count")

    unique_rows, inverse = np.unique(x, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_unique = unique_rows.shape[0]
    # per-feature integer level of each distinct row; thresholds map back through `levels`
    levels = [np.unique(unique_rows[:, f]) for f in range(d)]
    codes = np.column_stack([np.searchsorted(levels[f], unique_rows[:, f]) for f in range(d)]).astype(np.int64)
    n_levels = np.array([lv.size for lv in levels], dtype=np.int64)
    cat = np.array(categorical, dtype=np.bool_)

    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(K):
        if bootstrap:
            draws = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        else:
            draws = np.ones(n)
        w = np.bincount(inverse, draws, minlength=n_unique)
        s = np.bincount(inverse, draws * y, minlength=n_unique)
        q = np.bincount(inverse, draws * y * y, minlength=n_unique)
        rows = np.flatnonzero(w > 0)
        # one random key row per potential node: argsort gives that node's feature order
        keys = rng.random((2 * rows.size, d))
        feat, code, left, right, value = _grow(codes[rows], w[rows], s[rows], q[rows], n_levels, cat,
                                               m, float(min_leaf), keys)
        threshold = np.array([levels[f][c] if f >= 0 else 0.0 for f, c in zip(feat, code)])
        trees.append(RegressionTree(feat, threshold, left, right, value))
    return Forest(trees, m, categorical, tuple(feature_names))


@numba.njit(cache=True)
def _grow(codes, w, s, q, n_levels, categorical, m, min_leaf, keys):
    n, d = codes.shape
    max_nodes = 2 * n
    feature = np.full(max_nodes, -1, dtype=np.int64)
    code = np.zeros(max_nodes, dtype=np.int64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    idx = np.arange(n)
    wv = np.zeros(n_levels.max())
    sv = np.zeros(n_levels.max())

    # stack of (start, end, parent, is_left); pushing right before left yields pre-order numbering
    stack = np.empty((max_nodes, 4), dtype=np.int64)
    top = 0
    stack[0, 0], stack[0, 1], stack[0, 2], stack[0, 3] = 0, n, -1, 0
    top = 1
    n_nodes = 0
    while top > 0:
        top -= 1
        lo, hi, parent, is_left = stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        W = 0.0
        S = 0.0
        Q = 0.0
        for k in range(lo, hi):
            r = idx[k]
            W += w[r]
            S += s[r]
            Q += q[r]
        value[node] = S / W
        if W < 2 * min_leaf or hi - lo < 2:
            continue
        sse = Q - S * S / W
        if sse <= 1e-12 * max(1.0, Q):
            continue
        best_gain = 1e-10 * max(1.0, sse)
        best_f = -1
        best_c = -1
        visited = 0
        # constant features do not count toward m
        for f in np.argsort(keys[node]):
            if visited >= m:
                break
            L = n_levels[f]
            wv[:L] = 0.0
            sv[:L] = 0.0
            for k in range(lo, hi):
                r = idx[k]
                wv[codes[r, f]] += w[r]
                sv[codes[r, f]] += s[r]
            present = 0
            for c in range(L):
                if wv[c] > 0:
                    present += 1
            if present < 2:
                continue
            visited += 1
            wl = 0.0
            sl = 0.0
            for c in range(L):
                if wv[c] == 0:
                    continue
                if categorical[f]:
                    wl = wv[c]
                    sl = sv[c]
                else:
                    wl += wv[c]
                    sl += sv[c]
                wr = W - wl
                sr = S - sl
                if wl < min_leaf or wr < min_leaf or wr <= 0:
                    continue
                gain = sl * sl / wl + sr * sr / wr - S * S / W
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_c = c
        if best_f < 0:
            continue
        feature[node] = best_f
        code[node] = best_c
        # partition idx[lo:hi] so rows going left come first
        i = lo
        j = hi - 1
        while i <= j:
            c = codes[idx[i], best_f]
            goes_left = c == best_c if categorical[best_f] else c <= best_c
            if goes_left:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = i, hi, node, 0
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2], stack[top, 3] = lo, i, node, 1
        top += 1
    return feature[:n_nodes], code[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def tree_predict(tree: RegressionTree, x, categorical) -> float:
    k = 0
    feature, threshold = tree.feature, tree.threshold
    while feature[k] >= 0:
        f = feature[k]
        go_left = x[f] == threshold[k] if categorical[f] else x[f] <= threshold[k]
        k = tree.left[k] if go_left else tree.right[k]
    return float(tree.value[k])


def predict(forest: Forest, x) -> float:
    """Mean of the per-tree predictions for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (forest.n_features,):
        raise ShapeError(f"expected {forest.n_features} features, got shape {x.shape}")
    preds = [tree_predict(t, x, forest.categorical) for t in forest.trees]
    return float(np.mean(preds))


def predict_many(forest: Forest, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ShapeError("expected a 2-D feature matrix")
    return np.array([predict(forest, row) for row in x])


# --- time models -------------------------------------------------------------

@dataclass
class EventTable:
    """Flat view of every completed hub/route visit in a log."""

    entity: np.ndarray       # location string (hub id or route id)
    is_route: np.ndarray
    arrival: np.ndarray
    departure: np.ndarray


def event_table(log) -> EventTable:
    cached = getattr(log, "_event_table", None)
    if cached is not None:
        return cached
    entity, is_route, arrival, departure = [], [], [], []
    for r in log.records:
        for e in r.events:
            if e.departure is None:
                continue
            entity.append(e.location)
            is_route.append(simnet.is_route(e.location))
            arrival.append(e.arrival)
            departure.append(e.departure)
    table = EventTable(np.array(entity, dtype=object), np.array(is_route, dtype=bool),
                       np.array(arrival, dtype=np.int64), np.array(departure, dtype=np.int64))
    log._event_table = table
    return table


@dataclass
class TimeModels:
    """Dwell forests per hub and travel forests per route, with class-mean fallbacks."""

    dwell: dict[str, Forest | None]
    travel: dict[str, Forest | None]
    dwell_mean: float
    travel_mean: float
    start: int = 0
    start_weekday: int = 0
    n_samples: dict[str, int] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def features_at(self, t) -> tuple[int, int]:
        """(hour of day, day of week) of absolute minute ``t``."""
        day, minute = divmod(int(np.floor(t)) - self.start, MINUTES_PER_DAY)
        return minute // 60, (self.start_weekday + day) % 7

    def predict_at(self, entity: str, t) -> float:
        return self.predict(entity, *self.features_at(t))

    def predict(self, entity: str, hour: int, dow: int) -> float:
        key = (entity, hour, dow)
        if key not in self._cache:
            route = simnet.is_route(entity)
            forest = (self.travel if route else self.dwell).get(entity)
            if forest is not None:
                self._cache[key] = predict(forest, np.array([hour, dow], dtype=float))
            else:
                fallback = self.travel_mean if route else self.dwell_mean
                if not np.isfinite(fallback):
                    raise DataError(f"no history at all to predict {entity!r}")
                self._cache[key] = fallback
        return self._cache[key]


def fit_time_models(log, t_o: int, K: int = 100, m: int | None = None, min_leaf: int = 5,
                    seed: int = 0, min_samples: int = 10) -> TimeModels:
    """One dwell forest per hub and one travel forest per route from visits finished before ``t_o``.

    Entities with fewer than ``min_samples`` visits use the mean over all
    hubs (or all routes) instead of a forest.
    """
    table = event_table(log)
    done = table.departure < t_o
    target = (table.departure - table.arrival).astype(float)
    day, minute = np.divmod(table.arrival - log.start, MINUTES_PER_DAY)
    feats = np.column_stack([minute // 60, (log.start_weekday + day) % 7]).astype(float)

    def class_mean(mask):
        return float(target[mask].mean()) if mask.any() else float("nan")

    models = TimeModels({}, {}, class_mean(done & ~table.is_route), class_mean(done & table.is_route),
                        start=log.start, start_weekday=log.start_weekday)
    entity_seed = np.random.SeedSequence(seed)
    entities = sorted(set(table.entity[done]))
    for entity, child in zip(entities, entity_seed.spawn(len(entities))):
        rows = np.flatnonzero(done & (table.entity == entity))
        models.n_samples[entity] = rows.size
        forest = None
        if rows.size >= min_samples:
            forest = fit(feats[rows], target[rows], K=K, m=m, min_leaf=min_leaf,
                         seed=int(child.generate_state(1)[0]), categorical=TIME_CATEGORICAL,
                         feature_names=TIME_FEATURES)
        (models.travel if simnet.is_route(entity) else models.dwell)[entity] = forest
    return models


# --- forest files --------------------------------------------------------------
#
# ``parcelcast-forest v1`` header, then ``m <m>``, ``categorical <0|1 ...>``,
# then per tree a ``tree <n_nodes>`` line followed by one pre-order node per
# line: ``<feature> <threshold> <left> <right> <value>`` (feature -1 = leaf).

def format_forest(forest: Forest) -> str:
    out = io.StringIO()
    out.write(FOREST_FORMAT + "\n")
    out.write(f"m {forest.m}\n")
    out.write("categorical " + " ".join(str(int(c)) for c in forest.categorical) + "\n")
    for tree in forest.trees:
        out.write(f"tree {tree.n_nodes}\n")
        for k in range(tree.n_nodes):
            out.write(f"{int(tree.feature[k])} {float(tree.threshold[k])!r} {int(tree.left[k])} {int(tree.right[k])} {float(tree.value[k])!r}\n")
    return out.getvalue()


def save_forest(forest: Forest, path) -> None:
    Path(path).write_text(format_forest(forest), encoding="utf-8")


def load_forest(path) -> Forest:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FOREST_FORMAT:
        raise DataError(f"{path}: not a {FOREST_FORMAT} file")
    m = int(lines[1].split()[1])
    categorical = tuple(bool(int(c)) for c in lines[2].split()[1:])
    trees, pos = [], 3
    while pos < len(lines):
        n_nodes = int(lines[pos].split()[1])
        rows = [lines[pos + 1 + k].split() for k in range(n_nodes)]
        trees.append(RegressionTree(
            np.array([int(r[0]) for r in rows]),
            np.array([float(r[1]) for r in rows]),
            np.array([int(r[2]) for r in rows]),
            np.array([int(r[3]) for r in rows]),
            np.array([float(r[4]) for r in rows]),
        ))
        pos += 1 + n_nodes
    return Forest(trees, m, categorical)
