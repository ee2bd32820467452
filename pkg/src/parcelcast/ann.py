"""Feed-forward network: ReLU hidden layers, linear output, MSE loss, Adam.

Parameters are stored as one ``(n_in, n_out)`` weight matrix and one bias
vector per layer, so a batch ``X`` of shape ``(n, n_in)`` maps to
``relu(X @ W + b)`` through the hidden layers. Weight decay is decoupled
from the adaptive step (``p -= lr * (adam_step + weight_decay * p)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ShapeError, TrainingError

PARAM_MAGIC = b"PCNET1\n"


@dataclass
class DenseNet:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or len(self.weights) != len(self.layer_dims) - 1:
            raise ShapeError("need one weight matrix per consecutive pair of layer dims")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_dims[k], self.layer_dims[k + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ShapeError(f"layer {k}: weights {w.shape} / bias {b.shape}, expected {expect}")

    @classmethod
    def init(cls, layer_dims, seed=0) -> DenseNet:
        """He-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / n_in)
            weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(tuple(layer_dims), weights, biases)

    @classmethod
    def zeros(cls, layer_dims) -> DenseNet:
        return cls(
            tuple(layer_dims),
            [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])],
            [np.zeros(b) for b in layer_dims[1:]],
        )

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> DenseNet:
        return DenseNet(self.layer_dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 500
    weight_decay: float = 0.01
    batch_size: int | None = None  # None means full batch
    seed: int = 0
    warmup_steps: int = 0
    schedule: str = "constant"  # or "cosine": decay to 0 over the remaining steps

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.warmup_steps < 0 or self.schedule not in ("constant", "cosine"):
            raise ConfigError("warmup_steps must be >= 0 and schedule 'constant' or 'cosine'")

    def rate(self, step: int, total: int) -> float:
        """Learning rate for 1-based optimizer ``step`` out of ``total``."""
        if step <= self.warmup_steps:
            return self.learning_rate * step / self.warmup_steps
        if self.schedule == "cosine":
            span = max(1, total - self.warmup_steps)
            return 0.5 * self.learning_rate * (1.0 + np.cos(np.pi * (step - self.warmup_steps) / span))
        return self.learning_rate


@dataclass
class AdamState:
    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: DenseNet) -> AdamState:
        params = net.params()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def update(self, params, grads, lr, weight_decay) -> None:
        """One in-place AdamW step over matching ``params``/``grads`` lists."""
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for p, g, m, v in zip(params, grads, self.first, self.second):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            step = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if weight_decay:
                step += weight_decay * p
            p -= lr * step


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ShapeError(f"input has shape {x.shape}, network expects {net.n_inputs} features")
    return x, single


def _forward_all(net: DenseNet, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        acts.append(z if k == last else np.maximum(z, 0.0))
    return acts


def forward(net: DenseNet, x) -> np.ndarray:
    """Network output for one sample (1-D) or a batch (2-D)."""
    x, single = _as_batch(net, x)
    out = _forward_all(net, x)[-1]
    return out[0] if single else out


def _targets(net, y, n):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :] if n == 1 and y.shape[0] == net.n_outputs else y[:, None]
    if y.shape != (n, net.n_outputs):
        raise ShapeError(f"targets have shape {y.shape}, expected {(n, net.n_outputs)}")
    return y


def loss(net: DenseNet, x, y) -> float:
    """Mean squared error over every output of every sample."""
    x, _ = _as_batch(net, x)
    if x.shape[0] == 0:
        raise DataError("empty batch")
    y = _targets(net, y, x.shape[0])
    diff = forward(net, x) - y
    return float(np.mean(diff * diff))


def gradients(net: DenseNet, x, y) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of ``loss`` as one ``(dW, db)`` pair per layer."""
    grads, _ = _backprop(net, *_checked(net, x, y))
    return grads


def _checked(net, x, y):
    x, _ = _as_batch(net, x)
    if x.shape[0] == 0:
        raise DataError("empty batch")
    return x, _targets(net, y, x.shape[0])


def _backprop(net, x, y):
    acts = _forward_all(net, x)
    diff = acts[-1] - y
    value = float(np.mean(diff * diff))
    delta = (2.0 / diff.size) * diff
    grads = []
    for k in range(len(net.weights) - 1, -1, -1):
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k:
            delta = (delta @ net.weights[k].T) * (acts[k] > 0)
    grads.reverse()
    return grads, value


def train(net: DenseNet, x, y, cfg: TrainConfig) -> tuple[DenseNet, list[float]]:
    """Fit a copy of ``net`` to ``(x, y)``; returns it with the per-epoch mean loss.

    The trace entry for an epoch is the sample-weighted mean of the batch
    losses measured before each update.
    """
    x, y = _checked(net, x, y)
    net = net.copy()
    params = net.params()
    state = AdamState.for_net(net)
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    batch = n if cfg.batch_size is None else min(cfg.batch_size, n)
    total_steps = cfg.epochs * -(-n // batch)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = np.arange(n) if batch == n else rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch):
            rows = order[lo:lo + batch]
            with np.errstate(over="ignore", invalid="ignore"):
                grads, value = _backprop(net, x[rows], y[rows])
            if not np.isfinite(value):
                raise TrainingError(f"training diverged at epoch {epoch} (loss {value})")
            total += value * rows.size
            lr = cfg.rate(state.step + 1, total_steps)
            state.update(params, [g for pair in grads for g in pair], lr, cfg.weight_decay)
        trace.append(total / n)
    if not all(np.isfinite(p).all() for p in params):
        raise TrainingError(f"non-finite parameters after epoch {cfg.epochs}")
    return net, trace


@dataclass
class Standardizer:
    """Per-column affine scaling fitted on training data; constant columns keep scale 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> Standardizer:
        x = np.asarray(x, dtype=float)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, n) -> Standardizer:
        return cls(np.zeros(n), np.ones(n))

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.mean


# --- parameter files ---------------------------------------------------------
#
# Layout: the magic line ``PCNET1``, one ASCII line ``dims d0 d1 ... dL``, then
# float64 little-endian values: for each layer the weight matrix row-major
# (n_in rows of n_out) followed by its bias vector.

def save_net(net: DenseNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC)
        fh.write(("dims " + " ".join(map(str, net.layer_dims)) + "\n").encode("ascii"))
        for p in net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_net(path) -> DenseNet:
    data = Path(path).read_bytes()
    if not data.startswith(PARAM_MAGIC):
        raise DataError(f"{path}: not a parameter file")
    rest = data[len(PARAM_MAGIC):]
    line, _, blob = rest.partition(b"\n")
    tokens = line.decode("ascii").split()
    if not tokens or tokens[0] != "dims":
        raise DataError(f"{path}: missing dims header")
    dims = tuple(int(t) for t in tokens[1:])
    values = np.frombuffer(blob, dtype="<f8")
    expected = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if values.size != expected:
        raise DataError(f"{path}: expected {expected} parameters, found {values.size}")
    weights, biases, pos = [], [], 0
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(values[pos:pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(values[pos:pos + b].copy())
        pos += b
    return DenseNet(dims, weights, biases)
