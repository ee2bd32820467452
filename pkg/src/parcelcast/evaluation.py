"""Accuracy metrics, empirical confidence bands and report files.

Records are held column-wise: one ``Records`` per method with parallel
arrays of observation time, horizon index, forecast and actual value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import EvaluationError

log = logging.getLogger(__name__)

REPORT_HEADER = "# parcelcast-report v1"
# horizon buckets by lead time in hours: [lo, hi)
BUCKETS = (("1-4h", 0, 4), ("5-8h", 4, 8), ("9-16h", 8, 16), ("17-24h", 16, 24))
MIN_RESIDUALS = 20
POOLING = ("pooled", "per_origin")


class ForecastRecord(NamedTuple):
    method: str
    t_o: int
    t: int
    forecast: float
    actual: float


@dataclass
class Records:
    method: str
    t_o: np.ndarray
    t: np.ndarray
    forecast: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        self.t_o = np.asarray(self.t_o, dtype=np.int64).ravel()
        self.t = np.asarray(self.t, dtype=np.int64).ravel()
        self.forecast = np.asarray(self.forecast, dtype=float).ravel()
        self.actual = np.asarray(self.actual, dtype=float).ravel()
        n = self.t_o.size
        if not (self.t.size == self.forecast.size == self.actual.size == n):
            raise EvaluationError("record columns differ in length")
        if (self.t < 0).any():
            raise EvaluationError("negative horizon index")

    def __len__(self):
        return self.t_o.size

    def __iter__(self):
        for row in zip(self.t_o.tolist(), self.t.tolist(), self.forecast.tolist(), self.actual.tolist()):
            yield ForecastRecord(self.method, *row)

    @classmethod
    def from_rows(cls, rows) -> Records:
        rows = list(rows)
        methods = {r.method for r in rows}
        if len(methods) > 1:
            raise EvaluationError(f"records mix methods {sorted(methods)}")
        method = methods.pop() if methods else ""
        cols = list(zip(*[(r.t_o, r.t, r.forecast, r.actual) for r in rows])) or [(), (), (), ()]
        return cls(method, *cols)

    @classmethod
    def from_matrix(cls, method, t_os, forecasts, actuals, scored=None) -> Records:
        """Flatten ``(n_origins, T+1)`` forecast/actual matrices; ``scored`` masks observable pairs."""
        f = np.asarray(forecasts, dtype=float)
        a = np.asarray(actuals, dtype=float)
        if f.shape != a.shape or f.ndim != 2 or f.shape[0] != len(t_os):
            raise EvaluationError(f"forecast {f.shape} / actual {a.shape} / origins {len(t_os)} do not align")
        mask = np.ones(f.shape, dtype=bool) if scored is None else np.asarray(scored, dtype=bool)
        t_o = np.broadcast_to(np.asarray(t_os, dtype=np.int64)[:, None], f.shape)
        t = np.broadcast_to(np.arange(f.shape[1]), f.shape)
        return cls(method, t_o[mask], t[mask], f[mask], a[mask])

    def subset(self, mask) -> Records:
        return Records(self.method, self.t_o[mask], self.t[mask], self.forecast[mask], self.actual[mask])

    def scaled(self, k: float) -> Records:
        return Records(self.method, self.t_o, self.t, self.forecast * k, self.actual * k)

    @property
    def residuals(self) -> np.ndarray:
        return self.actual - self.forecast


def mae(records: Records) -> float:
    if len(records) == 0:
        raise EvaluationError(f"no records to score for {records.method or 'method'}")
    return float(np.mean(np.abs(records.actual - records.forecast)))


def _check_aligned(a: Records, b: Records) -> None:
    if len(a) != len(b) or not (np.array_equal(a.t_o, b.t_o) and np.array_equal(a.t, b.t)):
        raise EvaluationError(f"{a.method} and {b.method} records cover different (t_o, t) pairs")


def _ratio(num: Records, den: Records) -> float:
    denominator = mae(den)
    if denominator == 0:
        raise EvaluationError(f"MASE undefined: naive MAE is 0 over {len(den)} pairs")
    return mae(num) / denominator


def mase(records: Records, naive: Records, pooling: str = "pooled") -> float:
    """Forecast MAE over naive MAE on identical ``(t_o, t)`` pairs.

    ``pooling="per_origin"`` averages the per-observation-time ratios instead
    of pooling every pair.
    """
    if pooling not in POOLING:
        raise ValueError(f"pooling must be one of {POOLING}")
    _check_aligned(records, naive)
    if pooling == "pooled":
        return _ratio(records, naive)
    return float(np.mean([_ratio(records.subset(records.t_o == o), naive.subset(naive.t_o == o))
                          for o in np.unique(records.t_o)]))


def bucket_of(t, interval: int = 15) -> np.ndarray:
    """Bucket index of horizon ``t``: lead time ``t * interval`` minutes in whole hours."""
    hours = np.asarray(t) * interval // 60
    edges = np.array([hi for _, _, hi in BUCKETS[:-1]])
    return np.searchsorted(edges, hours, side="right")


def bucket_mase(records: Records, naive: Records, interval: int = 15) -> dict[str, float]:
    """MASE per horizon bucket; empty buckets are left out, zero-naive buckets raise."""
    _check_aligned(records, naive)
    which = bucket_of(records.t, interval)
    out = {}
    for k, (name, _, _) in enumerate(BUCKETS):
        mask = which == k
        if mask.any():
            out[name] = _ratio(records.subset(mask), naive.subset(mask))
    return out


def horizon_mase(records: Records, naive: Records, n_periods: int) -> np.ndarray:
    """MASE per horizon index; NaN where undefined or unscored."""
    _check_aligned(records, naive)
    out = np.full(n_periods, np.nan)
    for t in range(n_periods):
        mask = records.t == t
        if mask.any():
            den = mae(naive.subset(mask))
            if den > 0:
                out[t] = mae(records.subset(mask)) / den
    return out


@dataclass(frozen=True)
class Band:
    lower: float  # residual quantile; interval is forecast + [lower, upper]
    upper: float

    @property
    def half_width(self) -> float:
        return max(abs(self.lower), abs(self.upper))


def confidence_bands(records: Records, level: float = 0.95, min_residuals: int = MIN_RESIDUALS) -> dict[int, Band]:
    """Empirical residual (actual - forecast) quantiles per horizon.

    Horizons with fewer than ``min_residuals`` residuals are omitted with a
    warning.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    lo_q, hi_q = (1 - level) / 2, (1 + level) / 2
    res = records.residuals
    bands, short = {}, []
    for t in np.unique(records.t).tolist():
        r = res[records.t == t]
        if r.size < min_residuals:
            short.append(t)
            continue
        lo, hi = np.quantile(r, [lo_q, hi_q])
        bands[t] = Band(float(lo), float(hi))
    if short:
        log.warning("%s: band omitted for %d horizons with fewer than %d residuals",
                    records.method or "method", len(short), min_residuals)
    return bands


@dataclass
class MetricReport:
    method: str
    mase: float
    mae: float
    bucket_mase: dict[str, float]
    horizon_mase: np.ndarray
    bands: dict[int, Band] = field(default_factory=dict)
    n_pairs: int = 0


def evaluate(records: Records, naive: Records, n_periods: int, interval: int = 15,
             bands: dict[int, Band] | None = None, pooling: str = "pooled") -> MetricReport:
    return MetricReport(
        method=records.method,
        mase=mase(records, naive, pooling),
        mae=mae(records),
        bucket_mase=bucket_mase(records, naive, interval),
        horizon_mase=horizon_mase(records, naive, n_periods),
        bands=dict(bands or {}),
        n_pairs=len(records),
    )


# --- report files ------------------------------------------------------------

SUMMARY_COLUMNS = ["method", "mase", "mae", *(f"mase_{name}" for name, _, _ in BUCKETS), "n_pairs"]
SERIES_COLUMNS = ["method", "t_o", "t", "forecast", "actual", "lower", "upper"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "NA"
    return f"{x:.6f}"


def format_summary(reports) -> str:
    lines = [REPORT_HEADER + " summary", "\t".join(SUMMARY_COLUMNS)]
    for r in reports:
        buckets = [_fmt(r.bucket_mase.get(name)) for name, _, _ in BUCKETS]
        lines.append("\t".join([r.method, _fmt(r.mase), _fmt(r.mae), *buckets, str(r.n_pairs)]))
    return "\n".join(lines) + "\n"


def format_horizon_matrix(reports, n_periods: int | None = None) -> str:
    reports = list(reports)
    if n_periods is None:
        n_periods = max((r.horizon_mase.size for r in reports), default=0)
    lines = [REPORT_HEADER + " horizon_mase", "\t".join(["t", *(r.method for r in reports)])]
    for t in range(n_periods):
        lines.append("\t".join([str(t), *(_fmt(float(r.horizon_mase[t])) for r in reports)]))
    return "\n".join(lines) + "\n"


def format_series(reports, records) -> str:
    """Forecast and actual per scored pair with band limits (``NA`` where no band)."""
    by_method = {r.method: r for r in reports}
    lines = [REPORT_HEADER + " series", "\t".join(SERIES_COLUMNS)]
    for rec in records:
        bands = by_method[rec.method].bands if rec.method in by_method else {}
        for row in rec:
            band = bands.get(row.t)
            lower = row.forecast + band.lower if band else None
            upper = row.forecast + band.upper if band else None
            lines.append("\t".join([row.method, str(row.t_o), str(row.t), _fmt(row.forecast),
                                    _fmt(row.actual), _fmt(lower), _fmt(upper)]))
    return "\n".join(lines) + "\n"


def write_report(reports, out_dir, records=(), n_periods: int | None = None) -> dict[str, Path]:
    """Write ``summary.tsv``, ``horizon_mase.tsv`` and ``series.tsv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    files = {
        "summary": (out / "summary.tsv", format_summary(reports)),
        "horizon_mase": (out / "horizon_mase.tsv", format_horizon_matrix(reports, n_periods)),
        "series": (out / "series.tsv", format_series(reports, records)),
    }
    for path, text in files.values():
        path.write_text(text, encoding="utf-8")
    return {k: p for k, (p, _) in files.items()}


def read_summary(path) -> dict[str, dict[str, float]]:
    rows = [ln.rstrip("\n").split("\t") for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln and not ln.startswith("#")]
    header = rows[0]
    out = {}
    for row in rows[1:]:
        out[row[0]] = {k: (float("nan") if v == "NA" else float(v)) for k, v in zip(header[1:], row[1:])}
    return out
