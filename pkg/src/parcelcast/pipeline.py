"""End-to-end run: load or simulate a log, train every method, replay the test days, score.

Day layout for an ``n``-day log with ``test_days`` held out at the end::

    [0, burn_in)                  history only (features need > 1 day)
    [burn_in, n - test - val)     unordered and direct network training
    [n - test - val, n - test)    validation: Holt-Winters parameter search,
                                  band residuals
    [n - test, n)                 walk-forward test replay

The ensemble network is fitted on sub-model forecasts replayed over every
day before the test split, keeping only windows that close before it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import baselines, datastore, destshare, ensemble, evaluation, ordered, simnet, unordered
from .ann import TrainConfig
from .datastore import EventLog, IntervalSpec
from .errors import ConfigError, ParcelcastError
from .evaluation import Records
from .simnet import MINUTES_PER_DAY

log = logging.getLogger(__name__)

METHODS = ("naive", "holt_winters", "ann_direct", "ensemble_sum", "ensemble_ann")
DEFAULT_METHODS = METHODS
BURN_IN_DAYS = 2


def demo_path(name: str) -> Path:
    return Path(str(files("parcelcast") / "data" / name))


@dataclass
class RunConfig:
    network: str = ""
    sim: str = ""
    log_path: str = ""  # existing event log; simulated from network + sim when empty
    target_hub: str = "G1"
    interval: int = 15
    horizon: int = 95
    methods: tuple[str, ...] = DEFAULT_METHODS
    sim_seed: int | None = None  # overrides the sim config seed
    model_seed: int = 0
    test_days: int = 3
    val_days: int = 3
    epochs: int = 500
    ensemble_epochs: int = 500
    trees: int = 100
    band_level: float = 0.95
    pooling: str = "pooled"
    alpha: float = destshare.DEFAULT_ALPHA
    convention: str = "algorithm"
    out_dir: str = "parcelcast-out"

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.network = self.network or str(demo_path("demo_network.ini"))
        self.sim = self.sim or str(demo_path("demo_sim.ini"))

    def validate(self) -> None:
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not self.methods:
            raise ConfigError("no methods selected")
        for name in ("network", "sim") if not self.log_path else ("network", "log_path"):
            if not Path(getattr(self, name)).exists():
                raise ConfigError(f"{name} path {getattr(self, name)!r} does not exist")
        if self.interval <= 0 or MINUTES_PER_DAY % self.interval:
            raise ConfigError("interval must divide 1440")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if self.test_days < 1 or self.val_days < 1:
            raise ConfigError("test_days and val_days must be >= 1")
        if self.pooling not in evaluation.POOLING:
            raise ConfigError(f"pooling must be one of {evaluation.POOLING}")

    def spec(self) -> IntervalSpec:
        return IntervalSpec(self.interval, self.horizon, 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 over the config fields and the contents of every input file."""
    h = hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    for name in ("network", "sim", "log_path"):
        path = getattr(cfg, name)
        if path and Path(path).exists():
            h.update(Path(path).read_bytes())
    return h.hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@contextmanager
def stage(name: str):
    """Prefix errors raised inside with the stage name, keeping their type."""
    start = time.perf_counter()
    log.info("stage %s", name)
    try:
        yield
    except ParcelcastError as exc:
        if not str(exc).startswith("["):
            raise type(exc)(f"[{name}] {exc}") from exc
        raise
    log.info("stage %s done in %.1fs", name, time.perf_counter() - start)


@dataclass
class DayPlan:
    n_days: int
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    @classmethod
    def for_days(cls, n_days: int, val_days: int, test_days: int) -> DayPlan:
        first_val = n_days - test_days - val_days
        if first_val - BURN_IN_DAYS < 1:
            raise ConfigError(
                f"{n_days} days cannot hold {BURN_IN_DAYS} burn-in, >= 1 training, "
                f"{val_days} validation and {test_days} test days"
            )
        return cls(n_days, tuple(range(BURN_IN_DAYS, first_val)),
                   tuple(range(first_val, n_days - test_days)), tuple(range(n_days - test_days, n_days)))


@dataclass
class RunResult:
    config: RunConfig
    plan: DayPlan
    reports: list[evaluation.MetricReport]
    records: list[Records]
    files: dict[str, Path] = field(default_factory=dict)
    conservation_violations: int = 0
    n_ordered_forecasts: int = 0
    test_violations: int = 0  # the same two counts restricted to the test days
    n_test_forecasts: int = 0
    timings: dict[str, float] = field(default_factory=dict)

    def report(self, method: str) -> evaluation.MetricReport:
        return next(r for r in self.reports if r.method == method)


def load_inputs(cfg: RunConfig):
    """Network and event log for a run (simulating when no log path is given)."""
    network = simnet.build_network(simnet.load_network_spec(cfg.network))
    if cfg.target_hub not in network.hubs:
        raise ConfigError(f"target hub {cfg.target_hub!r} is not in the network")
    if cfg.log_path:
        event_log = EventLog.load(cfg.log_path, hubs=network.hubs)
    else:
        sim_cfg = simnet.load_sim_config(cfg.sim, seed=cfg.sim_seed)
        if sim_cfg.interval_minutes != cfg.interval:
            raise ConfigError(f"sim interval {sim_cfg.interval_minutes} != run interval {cfg.interval}")
        records = simnet.simulate(network, sim_cfg)
        event_log = EventLog(records, end=sim_cfg.horizon_days * MINUTES_PER_DAY,
                             start_weekday=sim_cfg.start_weekday, hubs=network.hubs)
    return network, event_log


def _actuals(event_log, hub, t_os, spec):
    return np.array([event_log.arrival_counts(hub, t, spec.n_periods, spec.I) for t in t_os], dtype=float)


def _closed_by(t_os, spec, limit):
    """Mask of (t_o, t) pairs whose period ends at or before ``limit``."""
    ends = np.asarray(t_os)[:, None] + (np.arange(spec.n_periods) + 1) * spec.I
    return ends <= limit


def _scored(event_log, t_os, spec):
    # pair (t_o, t) is scored only when its period closes inside the log
    return _closed_by(t_os, spec, event_log.end)


def _calendar(event_log, t, spec):
    return datastore.calendar_encoding(t, spec.I, event_log.start_weekday, event_log.start)


def _ordered_matrix(event_log, hub, t_os, spec, schedule, network):
    out, violations = [], 0
    for t in t_os:
        snap = datastore.snapshot(event_log, t, hub)
        fc = ordered.forecast_ordered(snap, hub, spec.at(t), schedule.models_at(t), network)
        violations += not fc.conserved
        out.append(fc.counts)
    return np.array(out, dtype=float), violations


def _fold_forecasts(inputs, targets, train_mask, days, val_days, cfg, seed):
    """Ensemble forecasts for each validation day from a model fitted without that day."""
    days = np.asarray(days)
    out = np.zeros((int(np.isin(days, val_days).sum()), targets.shape[1]))
    pos = 0
    for d in val_days:
        fit_rows = np.flatnonzero(train_mask & (days != d))
        pred_rows = np.flatnonzero(days == d)
        model = ensemble.train_ensemble([inputs[i] for i in fit_rows], targets[fit_rows], _ens_cfg(cfg, seed))
        out[pos:pos + pred_rows.size] = ensemble.combine_ann_many(model, [inputs[i] for i in pred_rows])
        pos += pred_rows.size
    return out


def _ens_cfg(cfg, seed):
    base = ensemble.default_config(seed)
    return TrainConfig(base.learning_rate, cfg.ensemble_epochs, base.weight_decay, None, seed,
                       min(base.warmup_steps, cfg.ensemble_epochs), base.schedule)


def _net_cfg(cfg, seed):
    base = unordered.default_config(seed)
    return TrainConfig(base.learning_rate, cfg.epochs, base.weight_decay, None, seed,
                       min(base.warmup_steps, cfg.epochs), base.schedule)


def run(cfg: RunConfig, write: bool = True) -> RunResult:
    cfg.validate()
    timings = {}
    t0 = time.perf_counter()
    methods = set(cfg.methods)
    need_sub = bool(methods & {"ensemble_sum", "ensemble_ann"})
    spec = cfg.spec()
    hub = cfg.target_hub

    with stage("load"):
        network, event_log = load_inputs(cfg)
        plan = DayPlan.for_days(event_log.n_days, cfg.val_days, cfg.test_days)
        split = event_log.start + plan.test[0] * MINUTES_PER_DAY
        val_t_os = datastore.observation_times(event_log, plan.val, spec.I)
        test_t_os = datastore.observation_times(event_log, plan.test, spec.I)
        test_actual = _actuals(event_log, hub, test_t_os, spec)
        val_actual = _actuals(event_log, hub, val_t_os, spec)
        scored = _scored(event_log, test_t_os, spec)
        # validation pairs whose period closes after the split would use test-day actuals
        val_known = _closed_by(val_t_os, spec, split)
    timings["load"] = time.perf_counter() - t0

    val_fc, test_fc = {}, {}
    with stage("naive"):
        val_fc["naive"] = np.array([baselines.naive_forecast(event_log, hub, spec.at(t)) for t in val_t_os])
        test_fc["naive"] = np.array([baselines.naive_forecast(event_log, hub, spec.at(t)) for t in test_t_os])

    if "holt_winters" in methods:
        with stage("holt_winters"):
            per_day = MINUTES_PER_DAY // spec.I
            series = event_log.arrival_counts(hub, event_log.start, event_log.n_days * per_day, spec.I)
            v0, v1 = plan.val[0] * per_day, (plan.val[-1] + 1) * per_day
            state = baselines.fit_holt_winters(series, per_day, v0, v1)
            log.info("holt_winters alpha=%.2f beta=%.2f gamma=%.2f", state.alpha, state.beta, state.gamma)
            origins = [(t - event_log.start) // spec.I for t in [*val_t_os, *test_t_os]]
            fc = baselines.hw_walk_forward(state, series, origins, spec.n_periods)
            val_fc["holt_winters"], test_fc["holt_winters"] = fc[:len(val_t_os)], fc[len(val_t_os):]
        timings["holt_winters"] = time.perf_counter() - t0

    if "ann_direct" in methods:
        with stage("ann_direct"):
            model = unordered.train_unordered(event_log, hub, spec, plan.train, _net_cfg(cfg, cfg.model_seed + 1),
                                              target="total")
            val_fc["ann_direct"] = unordered.forecast_many(model, event_log, hub, val_t_os)
            test_fc["ann_direct"] = unordered.forecast_many(model, event_log, hub, test_t_os)
        timings["ann_direct"] = time.perf_counter() - t0

    violations = n_ordered = test_violations = n_test = 0
    if need_sub:
        # sub-model forecasts replayed over every training and validation day
        hist_t_os = datastore.observation_times(event_log, plan.train + plan.val, spec.I)
        n_val = len(val_t_os)
        with stage("unordered"):
            u_model = unordered.train_unordered(event_log, hub, spec, plan.train, _net_cfg(cfg, cfg.model_seed))
            u_hist = unordered.forecast_many(u_model, event_log, hub, hist_t_os)
            u_test = unordered.forecast_many(u_model, event_log, hub, test_t_os)
        timings["unordered"] = time.perf_counter() - t0
        with stage("ordered"):
            schedule = ordered.RetrainSchedule(event_log, K=cfg.trees, seed=cfg.model_seed + 3)
            o_hist, v1 = _ordered_matrix(event_log, hub, hist_t_os, spec, schedule, network)
            o_test, v2 = _ordered_matrix(event_log, hub, test_t_os, spec, schedule, network)
            violations, n_ordered = v1 + v2, len(hist_t_os) + len(test_t_os)
            test_violations, n_test = v2, len(test_t_os)
        timings["ordered"] = time.perf_counter() - t0
        val_fc["ensemble_sum"] = ensemble.combine_sum(u_hist[-n_val:], o_hist[-n_val:])
        test_fc["ensemble_sum"] = ensemble.combine_sum(u_test, o_test)
        if "ensemble_ann" in methods:
            with stage("ensemble_ann"):
                hist_in = [ensemble.EnsembleInput(u, o, _calendar(event_log, t, spec))
                           for u, o, t in zip(u_hist, o_hist, hist_t_os)]
                test_in = [ensemble.EnsembleInput(u, o, _calendar(event_log, t, spec))
                           for u, o, t in zip(u_test, o_test, test_t_os)]
                hist_actual = _actuals(event_log, hub, hist_t_os, spec)
                fit_mask = _closed_by(hist_t_os, spec, split).all(axis=1)
                rows = np.flatnonzero(fit_mask)
                hist_days = (np.asarray(hist_t_os) - event_log.start) // MINUTES_PER_DAY
                seed = cfg.model_seed + 2
                e_model = ensemble.train_ensemble([hist_in[i] for i in rows], hist_actual[rows], _ens_cfg(cfg, seed))
                test_fc["ensemble_ann"] = ensemble.combine_ann_many(e_model, test_in)
                val_fc["ensemble_ann"] = _fold_forecasts(hist_in, hist_actual, fit_mask, hist_days,
                                                         list(plan.val), cfg, seed)
            timings["ensemble_ann"] = time.perf_counter() - t0

    with stage("evaluate"):
        naive_rec = Records.from_matrix("naive", test_t_os, test_fc["naive"], test_actual, scored)
        reports, records = [], []
        for method in METHODS:
            if method not in methods:
                continue
            rec = Records.from_matrix(method, test_t_os, test_fc[method], test_actual, scored)
            val_rec = Records.from_matrix(method, val_t_os, val_fc[method], val_actual, val_known)
            bands = evaluation.confidence_bands(val_rec, cfg.band_level)
            reports.append(evaluation.evaluate(rec, naive_rec, spec.n_periods, spec.I, bands, cfg.pooling))
            records.append(rec)
    result = RunResult(cfg, plan, reports, records, conservation_violations=violations,
                       n_ordered_forecasts=n_ordered, test_violations=test_violations,
                       n_test_forecasts=n_test, timings=timings)
    if write:
        with stage("report"):
            result.files = evaluation.write_report(reports, cfg.out_dir, records, spec.n_periods)
            manifest = {
                "format": "parcelcast-run v1",
                "config": cfg.to_dict(),
                "config_hash": config_hash(cfg),
                "seeds": {"sim": cfg.sim_seed, "model": cfg.model_seed},
                "days": asdict(plan),
                "files": {k: {"path": p.name, "sha256": file_hash(p)} for k, p in result.files.items()},
            }
            path = Path(cfg.out_dir) / "manifest.json"
            path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
            result.files["manifest"] = path
    timings["total"] = time.perf_counter() - t0
    return result


def plan_text(cfg: RunConfig) -> str:
    """Human-readable resolved plan for ``--dry-run``."""
    lines = [f"{k}: {v}" for k, v in cfg.to_dict().items()]
    lines.append(f"config_hash: {config_hash(cfg)}")
    return "\n".join(lines)
