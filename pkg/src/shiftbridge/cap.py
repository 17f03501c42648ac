"""Classifier accuracy predictors: Naive, ATC, and DoC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_THRESHOLD, DataError, LabeledSet, ScoredSet, as_scored
from .evaluation import SampleProtocol, index_samples
from .models import crisp

SCORE_MAX_CONFIDENCE = "max-confidence"
SCORE_NEG_ENTROPY = "negative-entropy"


@dataclass(frozen=True)
class AccuracyEstimate:
    acc: float
    method: str

    def __post_init__(self):
        if not (0.0 <= self.acc <= 1.0):
            raise DataError(f"accuracy estimate {self.acc} outside [0, 1]")


@dataclass(frozen=True)
class DocRegressor:
    slope: float
    intercept: float
    val_reference_confidence: float
    val_reference_accuracy: float

    def __post_init__(self):
        for v in (self.slope, self.intercept, self.val_reference_confidence,
                  self.val_reference_accuracy):
            if not np.isfinite(v):
                raise DataError("DoC regressor parameters must be finite")


def max_confidence(posteriors) -> np.ndarray:
    y = np.asarray(posteriors, dtype=float)
    return np.maximum(y, 1.0 - y)


def negative_entropy(posteriors) -> np.ndarray:
    """y*log(y) + (1-y)*log(1-y), with 0*log(0) = 0."""
    y = np.asarray(posteriors, dtype=float)
    out = np.zeros_like(y)
    for p in (y, 1.0 - y):
        inner = p > 0.0
        out[inner] += p[inner] * np.log(p[inner])
    return out


_SCORES = {SCORE_MAX_CONFIDENCE: max_confidence, SCORE_NEG_ENTROPY: negative_entropy}


def accuracy_from_scores(val: ScoredSet, t: float = DEFAULT_THRESHOLD) -> float:
    return float((crisp(val.posteriors, t) == val.require_labels()).mean())


def naive_acc(model, val: LabeledSet, t: float = DEFAULT_THRESHOLD) -> AccuracyEstimate:
    """Accuracy on held-out validation data, blind to any test-set shift."""
    if len(val) == 0:
        raise DataError("validation set must be non-empty")
    preds = crisp(model.predict_posteriors(val.features), t)
    return AccuracyEstimate(float((preds == val.labels).mean()), "naive")


def atc_threshold(val: ScoredSet, score: str = SCORE_MAX_CONFIDENCE,
                  t: float = DEFAULT_THRESHOLD) -> float:
    """Confidence threshold whose exceedance rate on validation data equals
    the validation accuracy.

    Realized as the (1 - acc) empirical quantile of the per-point
    confidence scores, tie-breaking toward the lower value; degenerate
    accuracies 0 and 1 pin the threshold at +/- infinity.
    """
    if score not in _SCORES:
        raise DataError(f"unknown ATC score {score!r}; choose from {sorted(_SCORES)}")
    s_val = np.sort(_SCORES[score](val.posteriors))
    n = s_val.size
    m = round(accuracy_from_scores(val, t) * n)
    if m >= n:
        return -np.inf
    if m <= 0:
        return np.inf
    return float(s_val[n - m - 1])


def atc(val: ScoredSet, test_posteriors, score: str = SCORE_MAX_CONFIDENCE,
        t: float = DEFAULT_THRESHOLD) -> AccuracyEstimate:
    """Average thresholded confidence: the fraction of test points whose
    confidence exceeds the validation-matched threshold."""
    y_test = as_scored(test_posteriors).posteriors
    if y_test.size == 0:
        raise DataError("test set must be non-empty")
    tau = atc_threshold(val, score, t)
    s_test = _SCORES[score](y_test)
    return AccuracyEstimate(float((s_test > tau).mean()), f"atc-{score}")


def doc_fit_scored(val: ScoredSet, protocol: SampleProtocol,
                   t: float = DEFAULT_THRESHOLD) -> DocRegressor:
    """Fit the confidence-gap to accuracy-gap regression on resampled
    validation subsets.

    Every protocol sample contributes one point: x = its mean max
    confidence minus the full-validation mean, y = its accuracy minus the
    full-validation accuracy. An ordinary least-squares line through the
    points gives the corrector.
    """
    labels = val.require_labels()
    conf = max_confidence(val.posteriors)
    correct = (crisp(val.posteriors, t) == labels).astype(float)
    ref_conf = float(conf.mean())
    ref_acc = float(correct.mean())

    xs, ys = [], []
    for idx in index_samples(labels, protocol):
        xs.append(float(conf[idx].mean()) - ref_conf)
        ys.append(float(correct[idx].mean()) - ref_acc)
    x = np.asarray(xs)
    y = np.asarray(ys)
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx == 0.0:
        raise DataError("degenerate regression: need at least 2 distinct confidence gaps")
    slope = float(((x - x.mean()) * (y - y.mean())).sum()) / sxx
    intercept = float(y.mean() - slope * x.mean())
    return DocRegressor(slope, intercept, ref_conf, ref_acc)


def doc_fit(model, val: LabeledSet, protocol: SampleProtocol,
            t: float = DEFAULT_THRESHOLD) -> DocRegressor:
    scores = ScoredSet(model.predict_posteriors(val.features), val.labels)
    return doc_fit_scored(scores, protocol, t)


def doc_predict(reg: DocRegressor, test_posteriors) -> AccuracyEstimate:
    """Difference-of-confidence correction of the validation accuracy."""
    gap = float(max_confidence(as_scored(test_posteriors).posteriors).mean())
    gap -= reg.val_reference_confidence
    acc = reg.val_reference_accuracy + reg.slope * gap + reg.intercept
    return AccuracyEstimate(float(np.clip(acc, 0.0, 1.0)), "doc")
