"""Direct adaptations turning a method for one task into a method for another.

Six bridges connect calibration, quantification, and accuracy prediction.
Plug-in methods are passed as callables with the following shapes:

  quantifier(val: ScoredSet, test: ScoredSet) -> float
  calibrator_factory(val: ScoredSet, test: ScoredSet) -> callable(scores) -> scores
  acc_predictor(val: ScoredSet, test: ScoredSet, t: float) -> float

Validation sets always carry labels; test sets carry labels only so that
label-peeking oracle substitutes can be exercised in tests, and regular
methods never read them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibrate import Calibrator
from .core import (
    DEFAULT_THRESHOLD,
    DataError,
    LabeledSet,
    ScoredSet,
    as_scored,
    bin_index,
    map_from_bin_values,
)
from .cap import AccuracyEstimate
from .quantify import PrevalenceEstimate


@dataclass(frozen=True)
class BridgeConfig:
    """Bin counts and threshold shared by the binning bridges."""

    bins_quant_to_cal: int = 5
    bins_acc_to_cal: int = 6
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.bins_quant_to_cal < 2:
            raise DataError("quant-to-cal needs at least 2 bins")
        if self.bins_acc_to_cal < 2 or self.bins_acc_to_cal % 2 != 0:
            raise DataError("acc-to-cal needs an even bin count >= 2")


def split_scored(model, data: LabeledSet, t: float = DEFAULT_THRESHOLD):
    """Model scores of a labeled set, split by the crisp prediction."""
    scores = ScoredSet(model.predict_posteriors(data.features), data.labels)
    mask = scores.posteriors > t
    return scores, mask


def _side(scores: ScoredSet, mask: np.ndarray, positive: bool, what: str) -> ScoredSet:
    sel = mask if positive else ~mask
    if not sel.any():
        side = "positive" if positive else "negative"
        raise DataError(f"{what} {side} partition is empty")
    return scores.subset(np.flatnonzero(sel))


def cal_to_quant(calibrator, test) -> PrevalenceEstimate:
    """Prevalence as the mean of the calibrated test posteriors."""
    y = as_scored(test).posteriors
    calibrated = np.asarray(calibrator(y), dtype=float)
    return PrevalenceEstimate(float(np.clip(calibrated.mean(), 0.0, 1.0)), "cal-to-quant")


def cal_to_acc(calibrator_factory, model, val: LabeledSet, test: LabeledSet,
               t: float = DEFAULT_THRESHOLD) -> AccuracyEstimate:
    """Accuracy from two calibrators, one per crisp-prediction side.

    The positive side sums its calibrated posteriors (probability the
    prediction 1 is right); the negative side sums the complements; the
    total over the test size estimates accuracy.
    """
    val_scores, val_mask = split_scored(model, val, t)
    test_scores, test_mask = split_scored(model, test, t)
    total = 0.0
    for positive in (True, False):
        val_side = _side(val_scores, val_mask, positive, "validation")
        test_side = _side(test_scores, test_mask, positive, "test")
        calibrated = np.asarray(calibrator_factory(val_side, test_side)(test_side.posteriors))
        total += calibrated.sum() if positive else (1.0 - calibrated).sum()
    return AccuracyEstimate(float(np.clip(total / len(test), 0.0, 1.0)), "cal-to-acc")


def binned_quant_values(quantifier, val: ScoredSet, test: ScoredSet, b: int,
                        default_centers: np.ndarray | None = None) -> np.ndarray:
    """Per-bin prevalence estimates over the test posteriors, before any
    post-processing. Bins with no test mass keep their bin center."""
    centers = (np.arange(b) + 0.5) / b if default_centers is None else default_centers
    bins = bin_index(test.posteriors, b)
    values = np.empty(b)
    for i in range(b):
        mask = bins == i
        if not mask.any():
            values[i] = centers[i]
            continue
        try:
            values[i] = quantifier(val, test.subset(np.flatnonzero(mask)))
        except Exception as exc:
            raise DataError(f"quantifier failed on bin {i}: {exc}") from exc
    return values


def quant_to_cal(quantifier, val: ScoredSet, test, b: int = 5) -> Calibrator:
    """Calibration map from per-bin prevalence estimates.

    The test posteriors are quantized into b equal-width bins; the
    quantifier (trained on the full validation scores) estimates each
    bin's positive prevalence; the monotonized and smoothed estimates
    become knot outputs at the bin centers.
    """
    if b < 2:
        raise DataError("quant-to-cal needs at least 2 bins")
    values = binned_quant_values(quantifier, val, as_scored(test), b)
    return Calibrator("calibration-map", cal_map=map_from_bin_values(values))


def quant_to_acc(quantifier, model, val: LabeledSet, test: LabeledSet,
                 t: float = DEFAULT_THRESHOLD) -> AccuracyEstimate:
    """Accuracy from two dedicated quantifiers, one per prediction side.

    Correct predictions are the positives among the predicted positives
    plus the negatives among the predicted negatives; each side's
    quantifier supplies the corresponding proportion. An empty test side
    contributes zero weight and is skipped.
    """
    val_scores, val_mask = split_scored(model, val, t)
    test_scores, test_mask = split_scored(model, test, t)
    if len(test) == 0:
        raise DataError("test set must be non-empty")
    total = 0.0
    for positive in (True, False):
        sel = test_mask if positive else ~test_mask
        if not sel.any():
            continue
        val_side = _side(val_scores, val_mask, positive, "validation")
        test_side = test_scores.subset(np.flatnonzero(sel))
        p_hat = float(quantifier(val_side, test_side))
        share = p_hat if positive else (1.0 - p_hat)
        total += share * sel.sum()
    return AccuracyEstimate(float(np.clip(total / len(test), 0.0, 1.0)), "quant-to-acc")


def acc_to_quant(acc_predictor, model, val: LabeledSet, test: LabeledSet,
                 t: float = DEFAULT_THRESHOLD) -> PrevalenceEstimate:
    """Prevalence from two dedicated accuracy predictors, one per side.

    On the predicted positives, accuracy counts positives; on the
    predicted negatives, errors do. Weighting both by the side sizes
    recovers the overall positive prevalence.
    """
    val_scores, val_mask = split_scored(model, val, t)
    test_scores, test_mask = split_scored(model, test, t)
    if len(test) == 0:
        raise DataError("test set must be non-empty")
    total = 0.0
    for positive in (True, False):
        sel = test_mask if positive else ~test_mask
        if not sel.any():
            continue
        val_side = _side(val_scores, val_mask, positive, "validation")
        test_side = test_scores.subset(np.flatnonzero(sel))
        acc_hat = float(acc_predictor(val_side, test_side, t))
        share = acc_hat if positive else (1.0 - acc_hat)
        total += share * sel.sum()
    return PrevalenceEstimate(float(np.clip(total / len(test), 0.0, 1.0)), "acc-to-quant")


def binned_acc_values(acc_predictor, val: ScoredSet, test: ScoredSet, b: int,
                      t: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Per-bin positive proportions derived from accuracy estimates, before
    any post-processing. Bins with no test mass keep their bin center."""
    centers = (np.arange(b) + 0.5) / b
    bins = bin_index(test.posteriors, b)
    values = np.empty(b)
    for i in range(b):
        mask = bins == i
        if not mask.any():
            values[i] = centers[i]
            continue
        try:
            a_i = float(acc_predictor(val, test.subset(np.flatnonzero(mask)), t))
        except Exception as exc:
            raise DataError(f"accuracy predictor failed on bin {i}: {exc}") from exc
        values[i] = a_i if i >= b // 2 else 1.0 - a_i
    return values


def acc_to_cal(acc_predictor, model, val: LabeledSet, test, b: int = 6,
               t: float = DEFAULT_THRESHOLD) -> Calibrator:
    """Calibration map from per-bin accuracy estimates.

    Needs an even bin count: bins above 0.5 predict the positive class,
    so their estimated accuracy is the positive proportion; bins below
    0.5 predict the negative class, so the positive proportion is one
    minus the estimated accuracy.
    """
    if b < 2 or b % 2 != 0:
        raise DataError("acc-to-cal needs an even bin count >= 2")
    val_scores = ScoredSet(model.predict_posteriors(val.features), val.labels)
    values = binned_acc_values(acc_predictor, val_scores, as_scored(test), b, t)
    return Calibrator("calibration-map", cal_map=map_from_bin_values(values))
