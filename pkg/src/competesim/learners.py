"""Learners that compete for data.

Every learner owns its training set and exposes the same three calls:
``fit_seed`` trains on the initial seed batch, ``predict`` answers a user,
and ``observe`` appends a won datum (retraining on the learner's cadence).

Four kinds are provided: 1-nearest-neighbor, multinomial logistic
regression, a one-hidden-layer MLP trained with Adam, and ordinary least
squares without intercept.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidArgumentError, UnfittedError

log = logging.getLogger(__name__)

KINDS = ("nearest_neighbor", "logistic", "mlp", "ols")

# MLP settings used for the real datasets (input width is set by the data).
MLP_PRESETS = {
    "postures": dict(hidden=16, lr=1e-3, cadence=4, batch_size=32, max_epochs=32, max_points=1000),
    "adult": dict(hidden=64, lr=1e-3, cadence=32, batch_size=32, max_epochs=32, max_points=1000),
    "fashion_mnist": dict(hidden=400, lr=1e-4, cadence=500, batch_size=50, max_epochs=30, max_points=None),
}


class _Store:
    """Growable (X, y) buffer with amortized O(1) append."""

    def __init__(self, dim: int, label_dtype):
        self.dim = dim
        self.n = 0
        self._X = np.empty((8, dim))
        self._y = np.empty(8, dtype=label_dtype)

    @property
    def X(self) -> np.ndarray:
        return self._X[: self.n]

    @property
    def y(self) -> np.ndarray:
        return self._y[: self.n]

    def append(self, x, y) -> None:
        if self.n == self._X.shape[0]:
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._X[self.n] = x
        self._y[self.n] = y
        self.n += 1


class Learner:
    """Base class holding the owned dataset and the retrain bookkeeping."""

    kind = "base"
    parametric = True

    def __init__(self, dim: int, num_classes: int | None, rng: np.random.Generator, cadence: int = 1):
        if dim < 1:
            raise InvalidArgumentError(f"feature dimension must be >= 1, got {dim}")
        if cadence < 1:
            raise InvalidArgumentError(f"retrain cadence must be >= 1, got {cadence}")
        self.dim = dim
        self.num_classes = num_classes
        self.rng = rng
        self.cadence = cadence
        self.store = _Store(dim, np.int64 if num_classes else np.float64)
        self.since_retrain = 0
        self.n_retrains = 0
        self.fitted = False

    @property
    def classification(self) -> bool:
        return self.num_classes is not None

    @property
    def size(self) -> int:
        return self.store.n

    @property
    def X(self) -> np.ndarray:
        return self.store.X

    @property
    def y(self) -> np.ndarray:
        return self.store.y

    def _check_x(self, x) -> np.ndarray:
        if type(x) is np.ndarray and x.shape == (self.dim,) and x.dtype == np.float64:
            return x
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise InvalidArgumentError(f"expected {self.dim} features, got {x.shape[0]}")
        return x

    def fit_seed(self, X, y) -> "Learner":
        """Train on exactly the seed set (which may be empty for parametric kinds)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim) if len(X) else np.empty((0, self.dim))
        for xi, yi in zip(X, y):
            self.store.append(self._check_x(xi), yi)
        if self.size:
            self._train()
            self.fitted = True
        elif self.parametric:
            log.debug("%s seeded with no data; predicting uniformly at random", self.kind)
        return self

    def observe(self, x, y) -> "Learner":
        """Append a won datum and retrain once ``cadence`` new points have arrived."""
        self.store.append(self._check_x(x), y)
        self.since_retrain += 1
        if self.since_retrain >= self.cadence:
            self.since_retrain = 0
            self.n_retrains += 1
            self._train()
            self.fitted = True
        return self

    def _fallback(self, n: int) -> np.ndarray:
        if self.classification:
            return self.rng.integers(self.num_classes, size=n)
        return np.zeros(n)

    def predict(self, x):
        x = self._check_x(x)
        if not self.fitted:
            return self._fallback(1)[0].item()
        return self._predict_one(x)

    def predict_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if not self.fitted:
            return self._fallback(X.shape[0])
        return self._predict_many(X)

    # subclasses
    def _train(self) -> None:
        raise NotImplementedError

    def _predict_one(self, x):
        return self._predict_many(x[None, :])[0].item()

    def _predict_many(self, X) -> np.ndarray:
        raise NotImplementedError


class NearestNeighbor(Learner):
    """1-NN under Euclidean distance.

    When several stored points are equally near, the prediction is the
    majority label among them (lowest class id on a tied vote); for
    regression it is their mean label.
    """

    kind = "nearest_neighbor"
    parametric = False

    def __init__(self, dim, num_classes, rng, **_ignored):
        super().__init__(dim, num_classes, rng, cadence=1)

    def _train(self) -> None:
        pass  # the dataset is the model

    def predict(self, x):
        if self.size == 0:
            raise UnfittedError("nearest-neighbor learner has no data")
        return self._predict_one(self._check_x(x))

    def predict_many(self, X) -> np.ndarray:
        if self.size == 0:
            raise UnfittedError("nearest-neighbor learner has no data")
        return self._predict_many(np.asarray(X, dtype=float).reshape(-1, self.dim))

    def _vote(self, labels: np.ndarray):
        if labels.size == 1:
            return labels[0].item()
        if self.classification:
            return int(np.bincount(labels, minlength=self.num_classes).argmax())
        return float(labels.mean())

    def _predict_one(self, x):
        diff = self.store.X - x
        d = (diff * diff).sum(axis=1)
        return self._vote(self.store.y[d == d.min()])

    def _predict_many(self, X) -> np.ndarray:
        D, y = self.X, self.y
        out = np.empty(X.shape[0], dtype=y.dtype)
        step = max(1, int(4e6 // (D.shape[0] * self.dim)))
        for start in range(0, X.shape[0], step):
            chunk = X[start:start + step]
            # exact differences keep tie detection identical to _predict_one
            diff = chunk[:, None, :] - D[None, :, :]
            d = (diff * diff).sum(axis=2)
            mins = d.min(axis=1)
            for r in range(chunk.shape[0]):
                out[start + r] = self._vote(y[d[r] == mins[r]])
        return out


class OLS(Learner):
    """Least squares without intercept, refit from running sufficient statistics."""

    kind = "ols"

    def __init__(self, dim, num_classes, rng, cadence: int = 1, **_ignored):
        if num_classes is not None:
            raise InvalidArgumentError("OLS is a regression learner; num_classes must be None")
        super().__init__(dim, None, rng, cadence=cadence)
        self.xtx = np.zeros((dim, dim))
        self.xty = np.zeros(dim)
        self._seen = 0
        self.weight = np.zeros(dim)

    def _sync(self) -> None:
        X, y = self.X[self._seen:], self.y[self._seen:]
        self.xtx += X.T @ X
        self.xty += X.T @ y
        self._seen = self.size

    def _train(self) -> None:
        self._sync()
        if self.dim == 1:
            sxx = self.xtx[0, 0]
            self.weight = np.array([self.xty[0] / sxx if sxx > 0 else 0.0])
        else:
            self.weight = np.linalg.lstsq(self.xtx, self.xty, rcond=None)[0]

    def _predict_one(self, x):
        return float(x @ self.weight)

    def _predict_many(self, X) -> np.ndarray:
        return X @ self.weight


def batch_ols(X, y) -> np.ndarray:
    """Least-squares weights computed from scratch on the full data."""
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1)
    return np.linalg.lstsq(X, np.asarray(y, dtype=float), rcond=None)[0]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


class Logistic(Learner):
    """Multinomial logistic regression trained by full-batch gradient descent.

    Weights start at zero and are fine-tuned from their current values on
    each retrain.
    """

    kind = "logistic"

    def __init__(self, dim, num_classes, rng, lr: float = 0.5, cadence: int = 1, epochs: int = 50, **_ignored):
        if not num_classes or num_classes < 2:
            raise InvalidArgumentError("logistic regression needs num_classes >= 2")
        super().__init__(dim, num_classes, rng, cadence=cadence)
        if lr <= 0 or epochs < 1:
            raise InvalidArgumentError("lr must be > 0 and epochs >= 1")
        self.lr = lr
        self.epochs = epochs
        self.W = np.zeros((dim, num_classes))
        self.b = np.zeros(num_classes)

    def loss(self, X=None, y=None) -> float:
        X = self.X if X is None else X
        y = self.y if y is None else y
        return cross_entropy(X @ self.W + self.b, y)

    def gradient(self, X, y):
        p = _softmax(X @ self.W + self.b)
        p[np.arange(len(y)), y] -= 1.0
        p /= len(y)
        return X.T @ p, p.sum(axis=0)

    def step(self, X=None, y=None) -> None:
        X = self.X if X is None else X
        y = self.y if y is None else y
        gW, gb = self.gradient(X, y)
        self.W -= self.lr * gW
        self.b -= self.lr * gb

    def _train(self) -> None:
        for _ in range(self.epochs):
            self.step()

    def _predict_many(self, X) -> np.ndarray:
        return np.argmax(X @ self.W + self.b, axis=1)


def init_mlp(dim: int, hidden: int, num_classes: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform fan-in initialization: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    b1, b2 = 1.0 / math.sqrt(dim), 1.0 / math.sqrt(hidden)
    return {
        "W1": rng.uniform(-b1, b1, size=(dim, hidden)),
        "b1": rng.uniform(-b1, b1, size=hidden),
        "W2": rng.uniform(-b2, b2, size=(hidden, num_classes)),
        "b2": rng.uniform(-b2, b2, size=num_classes),
    }


def mlp_logits(params, X) -> np.ndarray:
    h = np.maximum(X @ params["W1"] + params["b1"], 0.0)
    return h @ params["W2"] + params["b2"]


def mlp_loss(params, X, y) -> float:
    return cross_entropy(mlp_logits(params, X), np.asarray(y))


def mlp_gradient(params, X, y) -> dict[str, np.ndarray]:
    """Gradient of the mean softmax cross-entropy over the batch."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(y) == 0:
        raise InvalidArgumentError("batch must be nonempty")
    pre = X @ params["W1"] + params["b1"]
    h = np.maximum(pre, 0.0)
    d_logits = _softmax(h @ params["W2"] + params["b2"])
    d_logits[np.arange(len(y)), y] -= 1.0
    d_logits /= len(y)
    d_h = (d_logits @ params["W2"].T) * (pre > 0)
    return {
        "W1": X.T @ d_h,
        "b1": d_h.sum(axis=0),
        "W2": h.T @ d_logits,
        "b2": d_logits.sum(axis=0),
    }


class Adam:
    """Adam with the usual defaults, applied in place to a dict of arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class MLP(Learner):
    """One hidden ReLU layer, softmax output, trained with Adam.

    Weights are drawn once at construction and fine-tuned thereafter. Each
    retrain shuffles the owned data and takes minibatches until either
    ``max_points`` examples have been processed or ``max_epochs`` passes are
    complete, whichever comes first.
    """

    kind = "mlp"

    def __init__(self, dim, num_classes, rng, hidden: int = 16, lr: float = 1e-3, cadence: int = 4,
                 batch_size: int = 32, max_epochs: int = 32, max_points: int | None = 1000, **_ignored):
        if not num_classes or num_classes < 2:
            raise InvalidArgumentError("MLP needs num_classes >= 2")
        if hidden < 1 or batch_size < 1 or max_epochs < 1 or lr <= 0:
            raise InvalidArgumentError("hidden, batch_size, max_epochs must be >= 1 and lr > 0")
        super().__init__(dim, num_classes, rng, cadence=cadence)
        self.hidden, self.lr, self.batch_size = hidden, lr, batch_size
        self.max_epochs, self.max_points = max_epochs, max_points
        self.params = init_mlp(dim, hidden, num_classes, rng)

    def _train(self) -> None:
        opt = Adam(self.params, lr=self.lr)
        X, y = self.X, self.y
        budget = math.inf if self.max_points is None else self.max_points
        seen = 0
        for _ in range(self.max_epochs):
            order = self.rng.permutation(len(y))
            for start in range(0, len(y), self.batch_size):
                idx = order[start:start + self.batch_size]
                if seen + len(idx) > budget:
                    idx = idx[: int(budget - seen)]
                if len(idx) == 0:
                    return
                opt.step(self.params, mlp_gradient(self.params, X[idx], y[idx]))
                seen += len(idx)
            if seen >= budget:
                return

    def _predict_many(self, X) -> np.ndarray:
        return np.argmax(mlp_logits(self.params, X), axis=1)


_CLASSES = {"nearest_neighbor": NearestNeighbor, "logistic": Logistic, "mlp": MLP, "ols": OLS}


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to build and its hyperparameters.

    ``options`` are passed to the learner constructor; ``preset`` names one
    of ``MLP_PRESETS`` whose values are used unless overridden.
    """

    kind: str = "nearest_neighbor"
    options: dict[str, Any] = field(default_factory=dict)
    preset: str | None = None

    def __post_init__(self):
        if self.kind not in _CLASSES:
            raise InvalidArgumentError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.preset is not None and self.preset not in MLP_PRESETS:
            raise InvalidArgumentError(f"unknown preset {self.preset!r}")
        for key in ("hidden", "cadence", "batch_size", "max_epochs", "epochs"):
            if key in self.options and int(self.options[key]) < 1:
                raise InvalidArgumentError(f"{key} must be positive")

    def resolved_options(self) -> dict[str, Any]:
        opts = dict(MLP_PRESETS[self.preset]) if self.preset else {}
        opts.update(self.options)
        return opts

    def build(self, dim: int, num_classes: int | None, rng: np.random.Generator) -> Learner:
        return _CLASSES[self.kind](dim, num_classes, rng, **self.resolved_options())

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "options": dict(self.options), "preset": self.preset}
