"""Type I forecaster: a two-hidden-layer network from history features to the
96-period unordered-volume vector.

The same machinery, with total arrivals as both the previous-day input and
the target, gives the direct total-volume network used as a comparison
method (``target="total"``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ann, datastore
from .ann import DenseNet, Standardizer, TrainConfig
from .datastore import IntervalSpec
from .errors import ConfigError

HIDDEN = (1024, 512)
TARGETS = ("unordered", "total")


def default_config(seed: int = 0) -> TrainConfig:
    """Peak rate 0.05 reached after a 100-step warm-up, then cosine decay; full batch, 500 epochs."""
    return TrainConfig(learning_rate=0.05, epochs=500, weight_decay=0.01, seed=seed,
                       warmup_steps=100, schedule="cosine")


@dataclass
class UnorderedModel:
    net: DenseNet
    x_scaler: Standardizer
    y_scaler: Standardizer
    hub: str
    interval: int
    horizon: int  # T
    target: str = "unordered"
    train_days: tuple[int, ...] = ()
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if tuple(self.net.layer_dims[1:-1]) != HIDDEN:
            raise ConfigError(f"hidden layers must be {HIDDEN}, got {self.net.layer_dims[1:-1]}")
        if self.net.n_outputs != self.horizon + 1:
            raise ConfigError(f"output width {self.net.n_outputs} != T+1 = {self.horizon + 1}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {TARGETS}")

    def spec(self, t_o: int) -> IntervalSpec:
        return IntervalSpec(self.interval, self.horizon, t_o)


def _features(log, hub, t_o, spec, target):
    builder = datastore.build_features if target == "unordered" else datastore.build_total_features
    return builder(log, hub, t_o, spec).as_array()


def _target(log, hub, spec, target):
    fn = datastore.unordered_target if target == "unordered" else datastore.bin_arrivals
    return fn(log, hub, spec).counts.astype(float)


def build_training_set(log, hub: str, spec_template: IntervalSpec, train_days, target: str = "unordered"):
    """One (features, target counts) pair per observation time in ``train_days``.

    Returns ``(t_os, X, Y)``. Every observation time must have a full
    history (else ``ColdStartError``) and a target window inside the log.
    """
    t_os = datastore.observation_times(log, train_days, spec_template.I)
    X = np.array([_features(log, hub, t, spec_template, target) for t in t_os])
    Y = np.array([_target(log, hub, spec_template.at(t), target) for t in t_os])
    return t_os, X, Y


def train_unordered(log, hub: str, spec_template: IntervalSpec, train_days, cfg: TrainConfig | None = None,
                    target: str = "unordered") -> UnorderedModel:
    cfg = cfg or default_config()
    _, X, Y = build_training_set(log, hub, spec_template, train_days, target)
    x_scaler = Standardizer.fit(X)
    # one scalar output scale keeps MSE weights equal across periods
    y_scaler = Standardizer(np.zeros(Y.shape[1]), np.full(Y.shape[1], max(float(Y.std()), 1e-12)))
    net = DenseNet.init((X.shape[1], *HIDDEN, Y.shape[1]), seed=cfg.seed)
    net, trace = ann.train(net, x_scaler.transform(X), y_scaler.transform(Y), cfg)
    return UnorderedModel(net, x_scaler, y_scaler, hub, spec_template.I, spec_template.T, target,
                          tuple(int(d) for d in train_days), trace)


def predict_raw(model: UnorderedModel, features) -> np.ndarray:
    return model.y_scaler.inverse(ann.forward(model.net, model.x_scaler.transform(features)))


def forecast_unordered(model: UnorderedModel, log, hub: str, t_o: int) -> np.ndarray:
    """Forecast vector of length T+1, clamped at zero."""
    features = _features(log, hub, t_o, model.spec(t_o), model.target)
    return np.maximum(predict_raw(model, features), 0.0)


def forecast_many(model: UnorderedModel, log, hub: str, t_os) -> np.ndarray:
    X = np.array([_features(log, hub, t, model.spec(t), model.target) for t in t_os])
    return np.maximum(predict_raw(model, X), 0.0)


def save_model(model: UnorderedModel, path) -> None:
    """Parameters in the ``ann`` format at ``path`` plus ``<path>.json`` with scaling and metadata."""
    path = Path(path)
    ann.save_net(model.net, path)
    sidecar = {
        "format": "parcelcast-unordered v1",
        "hub": model.hub,
        "interval": model.interval,
        "horizon": model.horizon,
        "target": model.target,
        "train_days": list(model.train_days),
        "x_mean": model.x_scaler.mean.tolist(),
        "x_scale": model.x_scaler.scale.tolist(),
        "y_mean": model.y_scaler.mean.tolist(),
        "y_scale": model.y_scaler.scale.tolist(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1), encoding="utf-8")


def load_model(path) -> UnorderedModel:
    net = ann.load_net(path)
    meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    return UnorderedModel(
        net,
        Standardizer(np.array(meta["x_mean"]), np.array(meta["x_scale"])),
        Standardizer(np.array(meta["y_mean"]), np.array(meta["y_scale"])),
        meta["hub"], meta["interval"], meta["horizon"], meta["target"], tuple(meta["train_days"]),
    )
