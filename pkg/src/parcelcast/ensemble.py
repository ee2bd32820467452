"""Combining the unordered and ordered forecasts into a total forecast.

Two combiners: plain elementwise summation, and a one-hidden-layer network
that sees both sub-forecasts plus the calendar encoding of the observation
time and emits the whole T+1 horizon at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ann
from .ann import DenseNet, Standardizer, TrainConfig
from .errors import ConfigError, DataError, ShapeError

HIDDEN = 256
CALENDAR_WIDTH = 9


def combine_sum(u_hat, o_hat) -> np.ndarray:
    u = np.asarray(u_hat, dtype=float)
    o = np.asarray(o_hat, dtype=float)
    if u.shape != o.shape:
        raise ShapeError(f"cannot sum forecasts of shape {u.shape} and {o.shape}")
    return u + o


@dataclass(frozen=True)
class EnsembleInput:
    u_hat: np.ndarray
    o_hat: np.ndarray
    calendar: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_hat, dtype=float)
        o = np.asarray(self.o_hat, dtype=float)
        if u.ndim != 1 or u.shape != o.shape:
            raise ShapeError(f"sub-forecasts must be equal-length vectors, got {u.shape} and {o.shape}")
        if (u < 0).any() or (o < 0).any():
            raise DataError("sub-forecasts must be non-negative")
        object.__setattr__(self, "u_hat", u)
        object.__setattr__(self, "o_hat", o)
        object.__setattr__(self, "calendar", np.asarray(self.calendar, dtype=float).ravel())

    @property
    def n_periods(self) -> int:
        return self.u_hat.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.u_hat, self.o_hat, self.calendar])


@dataclass
class EnsembleModel:
    net: DenseNet
    x_scaler: Standardizer
    y_scaler: Standardizer
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        hidden = self.net.layer_dims[1:-1]
        if hidden != (HIDDEN,):
            raise ConfigError(f"ensemble network needs one hidden layer of {HIDDEN}, got {hidden}")

    @property
    def n_periods(self) -> int:
        return self.net.n_outputs


def default_config(seed: int = 0) -> TrainConfig:
    """Rate 0.01 after a 100-step warm-up with cosine decay; full batch, 500 epochs."""
    return TrainConfig(learning_rate=0.01, epochs=500, weight_decay=0.01, seed=seed,
                       warmup_steps=100, schedule="cosine")


def _stack(inputs) -> np.ndarray:
    inputs = list(inputs)
    if not inputs:
        raise DataError("no ensemble samples")
    widths = {x.as_array().size for x in inputs}
    if len(widths) != 1:
        raise ShapeError(f"ensemble inputs have mixed widths {sorted(widths)}")
    return np.array([x.as_array() for x in inputs])


def train_ensemble(inputs, targets, cfg: TrainConfig | None = None) -> EnsembleModel:
    """Fit the combiner on sub-model forecasts and the matching true totals.

    ``inputs`` must hold forecasts that were available at each sample's
    observation time; ``targets`` is ``(n, T+1)``.
    """
    cfg = cfg or default_config()
    X = _stack(inputs)
    Y = np.asarray(targets, dtype=float)
    n_periods = inputs[0].n_periods
    if Y.shape != (X.shape[0], n_periods):
        raise ShapeError(f"targets have shape {Y.shape}, expected {(X.shape[0], n_periods)}")
    x_scaler = Standardizer.fit(X)
    y_scaler = Standardizer(np.zeros(n_periods), np.full(n_periods, max(float(Y.std()), 1e-12)))
    net = DenseNet.init((X.shape[1], HIDDEN, n_periods), seed=cfg.seed)
    net, trace = ann.train(net, x_scaler.transform(X), y_scaler.transform(Y), cfg)
    return EnsembleModel(net, x_scaler, y_scaler, trace)


def combine_ann(model: EnsembleModel, inp: EnsembleInput) -> np.ndarray:
    x = inp.as_array()
    if x.size != model.net.n_inputs:
        raise ShapeError(f"ensemble input has {x.size} values, model expects {model.net.n_inputs}")
    out = model.y_scaler.inverse(ann.forward(model.net, model.x_scaler.transform(x)))
    return np.maximum(out, 0.0)


def combine_ann_many(model: EnsembleModel, inputs) -> np.ndarray:
    X = _stack(inputs)
    if X.shape[1] != model.net.n_inputs:
        raise ShapeError(f"ensemble input has {X.shape[1]} values, model expects {model.net.n_inputs}")
    return np.maximum(model.y_scaler.inverse(ann.forward(model.net, model.x_scaler.transform(X))), 0.0)


def save_model(model: EnsembleModel, path) -> None:
    path = Path(path)
    ann.save_net(model.net, path)
    sidecar = {
        "format": "parcelcast-ensemble v1",
        "x_mean": model.x_scaler.mean.tolist(),
        "x_scale": model.x_scaler.scale.tolist(),
        "y_mean": model.y_scaler.mean.tolist(),
        "y_scale": model.y_scaler.scale.tolist(),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1), encoding="utf-8")


def load_model(path) -> EnsembleModel:
    net = ann.load_net(path)
    meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    return EnsembleModel(
        net,
        Standardizer(np.array(meta["x_mean"]), np.array(meta["x_scale"])),
        Standardizer(np.array(meta["y_mean"]), np.array(meta["y_scale"])),
    )
