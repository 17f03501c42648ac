"""Small self-contained binary probabilistic classifiers.

Three model families cover the experiment needs: logistic regression
(smooth, near-calibrated scores), Gaussian naive Bayes (typically
ill-calibrated), and k-nearest-neighbor (discrete scores; with k
neighbors at most k+1 distinct posteriors occur, which makes exact
score-equality grouping meaningful).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_THRESHOLD, DataError, LabeledSet, _frozen

LOGISTIC = "logistic-regression"
NAIVE_BAYES = "gaussian-naive-bayes"
KNN = "k-nearest-neighbor"
KINDS = (LOGISTIC, NAIVE_BAYES, KNN)

_VAR_FLOOR = 1e-9


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def crisp(posteriors, t: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Thresholded predictions: positive iff the posterior exceeds t."""
    return (np.asarray(posteriors, dtype=float) > t).astype(np.int64)


def logistic_loss(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Mean log-loss of sigmoid(X @ w + b) with params = (w..., b)."""
    z = X @ params[:-1] + params[-1]
    # log(1 + exp(-z*s)) with s in {-1, +1}, computed stably
    s = 2.0 * y - 1.0
    m = -z * s
    return float(np.mean(np.logaddexp(0.0, m)))


def logistic_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`logistic_loss`."""
    r = sigmoid(X @ params[:-1] + params[-1]) - y
    n = X.shape[0]
    return np.concatenate([X.T @ r / n, [r.mean()]])


def fit_logistic_gd(X, y, init=None, tol=1e-6, max_iter=10_000, learning_rate=None):
    """Full-batch gradient descent on the mean log-loss.

    Stops when the gradient norm drops below `tol` or after `max_iter`
    steps. When no learning rate is given, a safe constant step is derived
    from the curvature bound of the log-loss (largest eigenvalue of the
    augmented Gram matrix over 4n).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    params = np.zeros(X.shape[1] + 1) if init is None else np.asarray(init, dtype=float).copy()
    if learning_rate is None:
        aug = np.column_stack([X, np.ones(n)])
        lips = float(np.linalg.eigvalsh(aug.T @ aug)[-1]) / (4.0 * n)
        learning_rate = 1.0 / max(lips, 1e-12)
    for _ in range(max_iter):
        g = logistic_grad(params, X, y)
        if float(np.linalg.norm(g)) < tol:
            break
        params -= learning_rate * g
    return params


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))

    def predict_posteriors(self, X: np.ndarray) -> np.ndarray:
        X = _check_dim(X, self.weights.size)
        return sigmoid(X @ self.weights + self.bias)

    def predict_posterior(self, x) -> float:
        return float(self.predict_posteriors(np.atleast_2d(np.asarray(x, dtype=float)))[0])


@dataclass(frozen=True)
class GaussianNBModel:
    means: np.ndarray      # (2, d) per-class feature means
    variances: np.ndarray  # (2, d) per-class feature variances, floored
    priors: np.ndarray     # (2,) class priors

    def __post_init__(self):
        for name in ("means", "variances", "priors"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float)))

    def predict_posteriors(self, X: np.ndarray) -> np.ndarray:
        X = _check_dim(X, self.means.shape[1])
        log_joint = np.empty((X.shape[0], 2))
        for c in range(2):
            var = self.variances[c]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - self.means[c]) ** 2 / var)
            log_joint[:, c] = ll.sum(axis=1) + np.log(self.priors[c])
        shift = log_joint.max(axis=1, keepdims=True)
        joint = np.exp(log_joint - shift)
        return joint[:, 1] / joint.sum(axis=1)

    def predict_posterior(self, x) -> float:
        return float(self.predict_posteriors(np.atleast_2d(np.asarray(x, dtype=float)))[0])


@dataclass(frozen=True)
class KnnModel:
    train_features: np.ndarray
    train_labels: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "train_features", _frozen(np.asarray(self.train_features, dtype=float)))
        object.__setattr__(self, "train_labels", _frozen(np.asarray(self.train_labels, dtype=np.int64)))

    def predict_posteriors(self, X: np.ndarray) -> np.ndarray:
        X = _check_dim(X, self.train_features.shape[1])
        k = min(self.k, self.train_labels.size)
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            d2 = ((self.train_features - x) ** 2).sum(axis=1)
            # stable sort so equal distances resolve to the lower row index
            nearest = np.argsort(d2, kind="stable")[:k]
            out[i] = self.train_labels[nearest].mean()
        return out

    def predict_posterior(self, x) -> float:
        return float(self.predict_posteriors(np.atleast_2d(np.asarray(x, dtype=float)))[0])


ProbModel = LogisticModel | GaussianNBModel | KnnModel


def _check_dim(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != d:
        raise DataError(f"feature rows must have dimension {d}")
    return X


def fit(kind: str, train: LabeledSet, **hyperparams) -> ProbModel:
    """Train a classifier of the given kind. Deterministic per hyperparams."""
    if kind == KNN:
        k = int(hyperparams.pop("k", 10))
        if hyperparams:
            raise DataError(f"unknown kNN hyperparams: {sorted(hyperparams)}")
        if k < 1:
            raise DataError("kNN needs k >= 1")
        return KnnModel(train.features, train.labels, k)

    if not (train.labels == 0).any() or not (train.labels == 1).any():
        raise DataError("training set must contain both classes")

    if kind == LOGISTIC:
        tol = hyperparams.pop("tol", 1e-6)
        max_iter = int(hyperparams.pop("max_iter", 10_000))
        learning_rate = hyperparams.pop("learning_rate", None)
        if hyperparams:
            raise DataError(f"unknown logistic hyperparams: {sorted(hyperparams)}")
        params = fit_logistic_gd(train.features, train.labels,
                                 tol=tol, max_iter=max_iter,
                                 learning_rate=learning_rate)
        return LogisticModel(params[:-1], float(params[-1]))

    if kind == NAIVE_BAYES:
        if hyperparams:
            raise DataError(f"unknown naive-Bayes hyperparams: {sorted(hyperparams)}")
        means = np.empty((2, train.dim))
        variances = np.empty((2, train.dim))
        priors = np.empty(2)
        for c in range(2):
            rows = train.features[train.labels == c]
            means[c] = rows.mean(axis=0)
            variances[c] = np.maximum(rows.var(axis=0), _VAR_FLOOR)
            priors[c] = rows.shape[0] / len(train)
        return GaussianNBModel(means, variances, priors)

    raise DataError(f"unknown model kind {kind!r}; choose from {KINDS}")


def predict_posterior(model: ProbModel, x) -> float:
    return model.predict_posterior(x)


def predict_posteriors(model: ProbModel, X) -> np.ndarray:
    return model.predict_posteriors(X)
