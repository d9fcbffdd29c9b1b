"""Classifiers and training procedures.

Three concrete classifiers share one contract (`Classifier`):

* `LinearModel`  — w.x + b, exact gradients, exposes its hyperplane.
* `MlpModel`     — 3-layer ReLU network trained by plain mini-batch SGD
                   with logistic loss and optional weight decay.
* `BayesOracle`  — decides by the sign of the vertical gap to a ground-truth
                   boundary surface x_K = f(x_1..x_{K-1}).

Decision tie rule: score == 0 resolves to +1 everywhere.

Model files are plain text: a header line

    wrckit-model v1 <kind> <K> <H1> <H2>

(`linear` uses H1 = H2 = 0) followed by whitespace-separated decimal weights
in documented order (mlp: W1 row-major, b1, W2 row-major, b2, w3, b3;
linear: w then b). Values are written with repr so reloads are bit-identical.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotDifferentiableError,
    TrainingDivergedError,
)
from .rng import RngHandle

MODEL_FORMAT_VERSION = "v1"


class Classifier(abc.ABC):
    """Score-based binary classifier on [0,1]^K with labels in {-1,+1}."""

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @property
    def differentiable(self) -> bool:
        return False

    @abc.abstractmethod
    def score(self, x) -> float: ...

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.score(row) for row in X])

    def decide(self, x) -> int:
        return 1 if self.score(x) >= 0.0 else -1

    def decides(self, X: np.ndarray) -> np.ndarray:
        s = self.scores(X)
        return np.where(s >= 0.0, 1, -1).astype(np.int64)

    def gradient(self, x) -> np.ndarray:
        raise NotDifferentiableError(type(self).__name__)

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"classifier dim {self.dim}, input dim {x.shape[-1]}")


class LinearModel(Classifier):
    """score(x) = w . x + b."""

    def __init__(self, w, b: float):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)
        if self.w.ndim != 1 or self.w.size == 0:
            raise ValueError("w must be a non-empty vector")

    @property
    def dim(self) -> int:
        return int(self.w.size)

    @property
    def differentiable(self) -> bool:
        return True

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        return float(self.w @ x + self.b)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        return X @ self.w + self.b

    def gradient(self, x) -> np.ndarray:
        return self.w.copy()

    def hyperplane(self) -> tuple[np.ndarray, float]:
        return self.w.copy(), self.b


class MlpModel(Classifier):
    """[K, H1, H2, 1] fully connected net, ReLU hidden, identity output."""

    def __init__(self, w1, b1, w2, b2, w3, b3: float):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.w3 = np.asarray(w3, dtype=np.float64)
        self.b3 = float(b3)
        h1, k = self.w1.shape
        h2 = self.w2.shape[0]
        if self.w2.shape != (h2, h1) or self.w3.shape != (h2,) \
                or self.b1.shape != (h1,) or self.b2.shape != (h2,):
            raise ValueError("inconsistent layer shapes")
        self._k, self._h1, self._h2 = k, h1, h2

    @classmethod
    def initialized(cls, k: int, h1: int, h2: int, rng: RngHandle) -> "MlpModel":
        gen = rng.generator()
        w1 = gen.standard_normal((h1, k)) * np.sqrt(2.0 / k)
        w2 = gen.standard_normal((h2, h1)) * np.sqrt(2.0 / h1)
        w3 = gen.standard_normal(h2) * np.sqrt(1.0 / h2)
        return cls(w1, np.zeros(h1), w2, np.zeros(h2), w3, 0.0)

    @property
    def dim(self) -> int:
        return self._k

    @property
    def widths(self) -> tuple[int, int]:
        return self._h1, self._h2

    @property
    def differentiable(self) -> bool:
        return True

    def _forward(self, X: np.ndarray):
        z1 = X @ self.w1.T + self.b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.w2.T + self.b2
        a2 = np.maximum(z2, 0.0)
        s = a2 @ self.w3 + self.b3
        return z1, a1, z2, a2, s

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        return float(self._forward(x[None, :])[4][0])

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        return self._forward(X)[4]

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        z1, _, z2, _, _ = self._forward(x[None, :])
        dz2 = self.w3 * (z2[0] > 0.0)
        dz1 = (dz2 @ self.w2) * (z1[0] > 0.0)
        return dz1 @ self.w1

    def near_kink(self, x, h: float) -> bool:
        """True when a hidden pre-activation sits within h of a ReLU kink."""
        x = np.asarray(x, dtype=np.float64)
        z1, _, z2, _, _ = self._forward(x[None, :])
        scale1 = np.sum(np.abs(self.w1), axis=1)
        scale2 = np.sum(np.abs(self.w2), axis=1) * np.max(
            np.sum(np.abs(self.w1), axis=1), initial=1.0)
        return bool(np.any(np.abs(z1[0]) <= h * np.maximum(scale1, 1.0)) or
                    np.any(np.abs(z2[0]) <= h * np.maximum(scale2, 1.0)))

    def _loss_and_grads(self, X, y, weight_decay):
        z1, a1, z2, a2, s = self._forward(X)
        m = -y * s
        # log(1 + exp(m)) computed stably
        loss = float(np.mean(np.logaddexp(0.0, m)))
        g = (-y * _sigmoid(m)) / X.shape[0]
        dw3 = a2.T @ g
        db3 = float(np.sum(g))
        da2 = g[:, None] * self.w3[None, :]
        dz2 = da2 * (z2 > 0.0)
        dw2 = dz2.T @ a1
        db2 = np.sum(dz2, axis=0)
        da1 = dz2 @ self.w2
        dz1 = da1 * (z1 > 0.0)
        dw1 = dz1.T @ X
        db1 = np.sum(dz1, axis=0)
        if weight_decay > 0.0:
            loss += 0.5 * weight_decay * (
                float(np.sum(self.w1 ** 2)) + float(np.sum(self.w2 ** 2)) +
                float(np.sum(self.w3 ** 2)))
            dw1 += weight_decay * self.w1
            dw2 += weight_decay * self.w2
            dw3 += weight_decay * self.w3
        return loss, (dw1, db1, dw2, db2, dw3, db3)

    def _sgd_step(self, grads, lr):
        dw1, db1, dw2, db2, dw3, db3 = grads
        self.w1 -= lr * dw1
        self.b1 -= lr * db1
        self.w2 -= lr * dw2
        self.b2 -= lr * db2
        self.w3 -= lr * dw3
        self.b3 -= lr * db3


class BayesOracle(Classifier):
    """Ground-truth classifier for boundary-as-graph problems.

    `boundary` must provide `dim` (the number of horizontal coordinates l),
    `heights(U)` mapping an (n, l) array to the (n,) boundary heights, and
    optionally `height_gradient(u)` and a `flat_level` attribute (the constant
    height when the surface is flat, else None).
    """

    def __init__(self, boundary):
        self.boundary = boundary
        self._dim = int(boundary.dim) + 1

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def differentiable(self) -> bool:
        return hasattr(self.boundary, "height_gradient")

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        return float(x[-1] - self.boundary.heights(x[None, :-1])[0])

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        return X[:, -1] - self.boundary.heights(X[:, :-1])

    def gradient(self, x) -> np.ndarray:
        if not self.differentiable:
            raise NotDifferentiableError("boundary has no gradient")
        x = np.asarray(x, dtype=np.float64)
        g = self.boundary.height_gradient(x[:-1])
        return np.concatenate([-np.asarray(g, dtype=np.float64), [1.0]])

    def hyperplane(self) -> tuple[np.ndarray, float]:
        level = getattr(self.boundary, "flat_level", None)
        if level is None:
            raise NotDifferentiableError("boundary is not flat")
        w = np.zeros(self._dim)
        w[-1] = 1.0
        return w, -float(level)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the SGD training loops.

    `epochs == 0` is allowed and returns the untouched initialization (used
    by no-op training tests).
    """

    epochs: int = 250
    batch_size: int = 32
    learning_rate: float = 0.2
    weight_decay: float = 0.0
    seed: int = 0
    threshold: float = 0.70
    val_fraction: float = 0.25
    hidden1: int = 32
    hidden2: int = 32

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class TrainReport:
    train_accuracy: float
    val_accuracy: float
    below_threshold: bool
    degenerate: bool
    epochs_run: int
    final_loss: float
    n_train: int
    n_val: int


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    kink_adjacent: bool


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _validate_training_data(data):
    X = np.asarray(data.X, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (n, K) matrix")
    if y.shape != (X.shape[0],) or not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be in {-1, +1}, one per row")
    return X, y


def _split(X, y, val_fraction, rng: RngHandle):
    n = X.shape[0]
    idx = rng.generator().permutation(n)
    n_val = int(round(val_fraction * n))
    if n_val == 0 or n_val == n:
        return X[idx], y[idx], X[idx], y[idx]
    val, tr = idx[:n_val], idx[n_val:]
    return X[tr], y[tr], X[val], y[val]


def _accuracy(model: Classifier, X, y) -> float:
    return float(np.mean(model.decides(X) == y))


def _run_epochs(model, step_fn, X, y, cfg: TrainConfig, rng: RngHandle):
    gen = rng.generator()
    n = X.shape[0]
    loss = float("nan")
    for epoch in range(cfg.epochs):
        order = gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            loss = step_fn(X[sel], y[sel])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
    return loss


def train_mlp(data, cfg: TrainConfig):
    """Train a 3-layer ReLU MLP; returns (model, TrainReport).

    Accuracy below cfg.threshold sets the report's `below_threshold` flag;
    it is the caller's decision whether that is fatal.
    """
    X, y = _validate_training_data(data)
    rng = RngHandle(cfg.seed)
    Xtr, ytr, Xval, yval = _split(X, y, cfg.val_fraction, rng.child("split"))
    model = MlpModel.initialized(X.shape[1], cfg.hidden1, cfg.hidden2,
                                 rng.child("init"))

    def step(xb, yb):
        loss, grads = model._loss_and_grads(xb, yb, cfg.weight_decay)
        model._sgd_step(grads, cfg.learning_rate)
        return loss

    final_loss = _run_epochs(model, step, Xtr, ytr, cfg, rng.child("epochs"))
    return model, _make_report(model, Xtr, ytr, Xval, yval, y, cfg, final_loss)


def train_logistic(data, cfg: TrainConfig):
    """Train a linear logistic model; returns (LinearModel, TrainReport)."""
    X, y = _validate_training_data(data)
    rng = RngHandle(cfg.seed)
    Xtr, ytr, Xval, yval = _split(X, y, cfg.val_fraction, rng.child("split"))
    model = LinearModel(np.zeros(X.shape[1]), 0.0)

    def step(xb, yb):
        s = model.scores(xb)
        m = -yb * s
        loss = float(np.mean(np.logaddexp(0.0, m)))
        g = (-yb * _sigmoid(m)) / xb.shape[0]
        dw = xb.T @ g + cfg.weight_decay * model.w
        db = float(np.sum(g))
        if cfg.weight_decay > 0.0:
            loss += 0.5 * cfg.weight_decay * float(np.sum(model.w ** 2))
        model.w -= cfg.learning_rate * dw
        model.b -= cfg.learning_rate * db
        return loss

    final_loss = _run_epochs(model, step, Xtr, ytr, cfg, rng.child("epochs"))
    return model, _make_report(model, Xtr, ytr, Xval, yval, y, cfg, final_loss)


def _make_report(model, Xtr, ytr, Xval, yval, y_all, cfg, final_loss):
    train_acc = _accuracy(model, Xtr, ytr)
    val_acc = _accuracy(model, Xval, yval)
    return TrainReport(
        train_accuracy=train_acc,
        val_accuracy=val_acc,
        below_threshold=val_acc < cfg.threshold,
        degenerate=np.unique(y_all).size < 2,
        epochs_run=cfg.epochs,
        final_loss=final_loss,
        n_train=Xtr.shape[0],
        n_val=Xval.shape[0],
    )


def finite_diff_check(c: Classifier, x, h: float = 1e-5) -> GradCheckReport:
    """Compare the analytic gradient with central differences of score.

    Returns the maximum per-coordinate relative error and whether x sits
    next to a ReLU kink (where the check is expected to fail).
    """
    if not c.differentiable:
        raise NotDifferentiableError(type(c).__name__)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < h) or np.any(x > 1.0 - h):
        raise ValueError("x must be interior: every coordinate in [h, 1-h]")
    analytic = c.gradient(x)
    k = x.size
    probes = np.repeat(x[None, :], 2 * k, axis=0)
    probes[np.arange(k), np.arange(k)] += h
    probes[k + np.arange(k), np.arange(k)] -= h
    s = c.scores(probes)
    fd = (s[:k] - s[k:]) / (2.0 * h)
    rel = np.abs(analytic - fd) / (np.abs(analytic) + 1e-12)
    kink = bool(getattr(c, "near_kink", lambda _x, _h: False)(x, h))
    return GradCheckReport(max_rel_error=float(np.max(rel)), kink_adjacent=kink)


def save_model(model: Classifier, path) -> None:
    """Write a classifier to the versioned plain-text format."""
    if isinstance(model, MlpModel):
        h1, h2 = model.widths
        header = f"wrckit-model {MODEL_FORMAT_VERSION} mlp {model.dim} {h1} {h2}"
        flat = np.concatenate([
            model.w1.ravel(), model.b1, model.w2.ravel(), model.b2,
            model.w3, [model.b3],
        ])
    elif isinstance(model, LinearModel):
        header = f"wrckit-model {MODEL_FORMAT_VERSION} linear {model.dim} 0 0"
        flat = np.concatenate([model.w, [model.b]])
    else:
        raise ValueError(f"cannot persist classifier type {type(model).__name__}")
    body = "\n".join(repr(float(v)) for v in flat)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n" + body + "\n")


def load_model(path) -> Classifier:
    """Read a classifier back; exact inverse of save_model."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        values = np.array([float(tok) for tok in fh.read().split()],
                          dtype=np.float64)
    if len(header) != 6 or header[0] != "wrckit-model" \
            or header[1] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unrecognized model header: {' '.join(header)!r}")
    kind, k, h1, h2 = header[2], int(header[3]), int(header[4]), int(header[5])
    if kind == "linear":
        if values.size != k + 1:
            raise ValueError("linear model weight count mismatch")
        return LinearModel(values[:k], values[k])
    if kind == "mlp":
        sizes = [h1 * k, h1, h2 * h1, h2, h2, 1]
        if values.size != sum(sizes):
            raise ValueError("mlp weight count mismatch")
        parts = np.split(values, np.cumsum(sizes)[:-1])
        return MlpModel(parts[0].reshape(h1, k), parts[1],
                        parts[2].reshape(h2, h1), parts[3],
                        parts[4], parts[5][0])
    raise ValueError(f"unknown model kind {kind!r}")
