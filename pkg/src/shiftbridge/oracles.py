"""Label-peeking perfect calibrator, quantifier, and accuracy predictor.

These oracles exist to verify, on finite samples, that each task reduces
exactly to the others: substituting a perfect solver for one task into
the corresponding bridge reproduces the target quantity of another task
up to floating-point error. Hidden labels never leave this module except
through the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_THRESHOLD, DataError, LabeledSet, ScoredSet, _frozen
from .models import crisp

RESIDUAL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class OracleContext:
    """Raw test scores plus the hidden test labels, grouped by exact score
    equality. Discrete-score classifiers (e.g. kNN) make the grouping
    genuinely coarse; continuous scores degenerate to singleton groups."""

    scores: np.ndarray
    hidden_labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        labels = np.asarray(self.hidden_labels)
        if scores.ndim != 1 or scores.size == 0 or scores.shape != labels.shape:
            raise DataError("scores and labels must be aligned non-empty vectors")
        object.__setattr__(self, "scores", _frozen(scores))
        object.__setattr__(self, "hidden_labels", _frozen(labels.astype(np.int64)))

    @classmethod
    def from_model(cls, model, test: LabeledSet) -> "OracleContext":
        return cls(model.predict_posteriors(test.features), test.labels)

    def __len__(self) -> int:
        return self.scores.size


def oracle_quant(ctx: OracleContext, subset_indices) -> float:
    """Exact positive fraction of a subset."""
    idx = np.asarray(subset_indices)
    if idx.size == 0:
        raise DataError("oracle quantifier needs a non-empty subset")
    return float(ctx.hidden_labels[idx].mean())


def oracle_acc(ctx: OracleContext, subset_indices, t: float = DEFAULT_THRESHOLD) -> float:
    """Exact fraction of correct thresholded predictions on a subset."""
    idx = np.asarray(subset_indices)
    if idx.size == 0:
        raise DataError("oracle accuracy needs a non-empty subset")
    preds = crisp(ctx.scores[idx], t)
    return float((preds == ctx.hidden_labels[idx]).mean())


def _group_positive_fractions(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Each point's positive fraction among points with bitwise-equal score."""
    _, inverse = np.unique(scores, return_inverse=True)
    pos = np.bincount(inverse, weights=labels.astype(float))
    size = np.bincount(inverse)
    return (pos / size)[inverse]


def oracle_calibrate(ctx: OracleContext, raw_scores=None) -> np.ndarray:
    """Perfectly calibrated scores: each point maps to the true positive
    fraction of its exact-score group."""
    scores = ctx.scores if raw_scores is None else np.asarray(raw_scores, dtype=float)
    if scores.shape != ctx.hidden_labels.shape:
        raise DataError("raw scores must align with the hidden labels")
    return _group_positive_fractions(scores, ctx.hidden_labels)


# Bridge-shaped adapters: label-peeking substitutes for real methods. The
# test-side ScoredSet must carry labels.

def oracle_quantifier(val: ScoredSet, test: ScoredSet) -> float:
    return float(test.require_labels().mean())


def oracle_acc_predictor(val: ScoredSet, test: ScoredSet, t: float = DEFAULT_THRESHOLD) -> float:
    return float((crisp(test.posteriors, t) == test.require_labels()).mean())


def oracle_calibrator_factory(val: ScoredSet, test: ScoredSet):
    """A calibrator that is perfect for the given test subset."""
    labels = test.require_labels()
    uniq, inverse = np.unique(test.posteriors, return_inverse=True)
    pos = np.bincount(inverse, weights=labels.astype(float))
    size = np.bincount(inverse)
    fractions = pos / size

    def apply(y):
        y = np.asarray(y, dtype=float)
        slots = np.searchsorted(uniq, y)
        slots = np.clip(slots, 0, uniq.size - 1)
        if not np.array_equal(uniq[slots], y):
            raise DataError("oracle calibrator queried outside its reference set")
        return fractions[slots]

    return apply


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    statement: str
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "residual", float(self.residual))

    @property
    def passed(self) -> bool:
        return bool(self.residual < RESIDUAL_TOLERANCE)


@dataclass(frozen=True)
class LemmaReport:
    checks: tuple[LemmaCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_residual(self) -> float:
        return max(c.residual for c in self.checks)

    def residual(self, name: str) -> float:
        for c in self.checks:
            if c.name == name:
                return c.residual
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "tolerance": RESIDUAL_TOLERANCE,
            "all_passed": self.all_passed,
            "checks": [
                {"name": c.name, "statement": c.statement,
                 "residual": c.residual, "passed": c.passed}
                for c in self.checks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{'check':<{width}}  {'residual':>12}  status"]
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            lines.append(f"{c.name:<{width}}  {c.residual:>12.3e}  {status}")
        return "\n".join(lines)


def verify_reductions(ctx: OracleContext, t: float = DEFAULT_THRESHOLD) -> LemmaReport:
    """Check all six oracle reductions on one finite sample.

    Every check compares a bridge estimate built from oracles against the
    directly counted target quantity; all residuals must vanish up to
    floating-point noise.
    """
    labels = ctx.hidden_labels
    scores = ctx.scores
    n = len(ctx)
    pos_mask = scores > t
    if not pos_mask.any() or pos_mask.all():
        raise DataError("both crisp partitions of the test set must be non-empty")

    true_prev = float(labels.mean())
    true_acc = float((crisp(scores, t) == labels).mean())

    # perfect calibrator -> quantifier: mean of perfectly calibrated scores
    calibrated = oracle_calibrate(ctx)
    r1 = abs(float(calibrated.mean()) - true_prev)

    # perfect calibrator -> accuracy: one perfect calibrator per side
    def side_calibrated(mask):
        return _group_positive_fractions(scores[mask], labels[mask])

    est = (side_calibrated(pos_mask).sum() + (1.0 - side_calibrated(~pos_mask)).sum()) / n
    r2 = abs(float(est) - true_acc)

    # perfect quantifier -> calibrator: per-group prevalences satisfy the
    # calibration identity under exact regrouping by output value
    quant_scores = _quant_derived_scores(ctx, np.arange(n))
    r3 = _calibration_identity_residual(quant_scores, labels)

    # perfect quantifier -> accuracy (composition through the derived
    # calibrator, one per side)
    est = 0.0
    for mask, positive in ((pos_mask, True), (~pos_mask, False)):
        derived = _quant_derived_scores(ctx, np.flatnonzero(mask))
        est += derived.sum() if positive else (1.0 - derived).sum()
    r4 = abs(float(est / n) - true_acc)

    # perfect accuracy predictor -> quantifier
    idx_pos = np.flatnonzero(pos_mask)
    idx_neg = np.flatnonzero(~pos_mask)
    est = (oracle_acc(ctx, idx_pos, t) * idx_pos.size
           + (1.0 - oracle_acc(ctx, idx_neg, t)) * idx_neg.size) / n
    r5 = abs(float(est) - true_prev)

    # perfect accuracy predictor -> calibrator (composition through the
    # accuracy-derived quantifier, one call per exact-score group)
    acc_scores = np.empty(n)
    for value in np.unique(scores):
        g = np.flatnonzero(scores == value)
        a = oracle_acc(ctx, g, t)
        acc_scores[g] = a if value > t else 1.0 - a
    r6 = _calibration_identity_residual(acc_scores, labels)

    return LemmaReport((
        LemmaCheck("cal-to-quant", "mean perfectly-calibrated score equals the positive prevalence", r1),
        LemmaCheck("cal-to-acc", "side-calibrated scores aggregate to the exact accuracy", r2),
        LemmaCheck("quant-to-cal", "group prevalences form perfectly calibrated scores", r3),
        LemmaCheck("quant-to-acc", "quantifier-derived calibrators aggregate to the exact accuracy", r4),
        LemmaCheck("acc-to-quant", "side accuracies aggregate to the exact prevalence", r5),
        LemmaCheck("acc-to-cal", "accuracy-derived group scores are perfectly calibrated", r6),
    ))


def verify_model_reductions(model, test: LabeledSet, t: float = DEFAULT_THRESHOLD) -> LemmaReport:
    return verify_reductions(OracleContext.from_model(model, test), t)


def _quant_derived_scores(ctx: OracleContext, subset: np.ndarray) -> np.ndarray:
    """Calibrated scores obtained by quantifying each exact-score group."""
    scores = ctx.scores[subset]
    out = np.empty(subset.size)
    for value in np.unique(scores):
        members = subset[scores == value]
        out[scores == value] = oracle_quant(ctx, members)
    return out


def _calibration_identity_residual(calibrated: np.ndarray, labels: np.ndarray) -> float:
    """Largest violation of `value == positive fraction at that value`."""
    worst = 0.0
    for value in np.unique(calibrated):
        frac = float(labels[calibrated == value].mean())
        worst = max(worst, abs(value - frac))
    return worst
