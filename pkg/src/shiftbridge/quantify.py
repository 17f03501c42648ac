"""Class-prevalence estimators over unlabeled test scores.

All quantifiers are aggregative: they consume the posterior scores a
classifier assigns to the test sample, together with labeled validation
scores from the training distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_THRESHOLD,
    DataError,
    Histogram,
    LabeledSet,
    ScoredSet,
    as_scored,
    build_histogram,
)

DEGENERATE_RATE_GAP = 1e-8
EMQ_CLAMP = 1e-6
HDY_GRID_STEP = 0.01
KDE_EPS = 1e-12


@dataclass(frozen=True)
class RateEstimates:
    """tpr/fpr of the crisp classifier, or their soft (expected) analogues."""

    tpr: float
    fpr: float
    soft: bool

    def __post_init__(self):
        if not (0.0 <= self.tpr <= 1.0 and 0.0 <= self.fpr <= 1.0):
            raise DataError("rates must lie in [0, 1]")


@dataclass
class PrevalenceEstimate:
    p: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise DataError(f"prevalence estimate {self.p} outside [0, 1]")


def cc(test_posteriors, t: float = DEFAULT_THRESHOLD) -> PrevalenceEstimate:
    """Classify and count: the fraction of scores above the threshold."""
    y = as_scored(test_posteriors).posteriors
    return PrevalenceEstimate(float((y > t).mean()), "cc")


def pcc(test_posteriors) -> PrevalenceEstimate:
    """Probabilistic classify and count: the mean posterior."""
    y = as_scored(test_posteriors).posteriors
    return PrevalenceEstimate(float(y.mean()), "pcc")


def rates_from_scores(val: ScoredSet, soft: bool, t: float = DEFAULT_THRESHOLD) -> RateEstimates:
    """tpr/fpr from labeled validation scores.

    Crisp rates count thresholded predictions; soft rates average the raw
    posterior over each true class.
    """
    labels = val.require_labels()
    pos = labels == 1
    if not pos.any() or pos.all():
        raise DataError("rate estimation requires both classes in validation data")
    if soft:
        tpr = float(val.posteriors[pos].mean())
        fpr = float(val.posteriors[~pos].mean())
    else:
        pred = val.posteriors > t
        tpr = float(pred[pos].mean())
        fpr = float(pred[~pos].mean())
    return RateEstimates(tpr, fpr, soft)


def estimate_rates(model, val: LabeledSet, soft: bool, t: float = DEFAULT_THRESHOLD) -> RateEstimates:
    scores = model.predict_posteriors(val.features)
    return rates_from_scores(ScoredSet(scores, val.labels), soft, t)


def adjust(p_raw: float, rates: RateEstimates) -> PrevalenceEstimate:
    """Linear tpr/fpr correction of a raw count, clipped to [0, 1].

    A near-zero denominator makes the correction unstable; in that case the
    raw estimate is returned untouched and flagged.
    """
    gap = rates.tpr - rates.fpr
    if abs(gap) < DEGENERATE_RATE_GAP:
        return PrevalenceEstimate(p_raw, "adjust", {"degenerate": True, "raw": p_raw})
    corrected = (p_raw - rates.fpr) / gap
    return PrevalenceEstimate(
        float(np.clip(corrected, 0.0, 1.0)),
        "adjust",
        {"degenerate": False, "raw": corrected},
    )


def acc_quant(model, val: LabeledSet, test_posteriors, t: float = DEFAULT_THRESHOLD) -> PrevalenceEstimate:
    """Adjusted classify and count: crisp count corrected by crisp rates."""
    est = adjust(cc(test_posteriors, t).p, estimate_rates(model, val, soft=False, t=t))
    est.method = "acc"
    return est


def pacc(model, val: LabeledSet, test_posteriors, t: float = DEFAULT_THRESHOLD) -> PrevalenceEstimate:
    """Probabilistic adjusted classify and count: soft count, soft rates."""
    est = pacc_from_scores(ScoredSet(model.predict_posteriors(val.features), val.labels), test_posteriors, t)
    return est


def pacc_from_scores(val: ScoredSet, test_posteriors, t: float = DEFAULT_THRESHOLD) -> PrevalenceEstimate:
    est = adjust(pcc(test_posteriors).p, rates_from_scores(val, soft=True, t=t))
    est.method = "pacc"
    return est


def emq(test_posteriors, train_prior: float, tol: float = 1e-6, max_iter: int = 1000):
    """Expectation-maximization prior/posterior update.

    Alternates a Bayes rescaling of the posteriors by the current prior
    ratio with a re-estimate of the prior as their mean, starting from the
    training prior, until the prior moves less than `tol`. Returns the
    final prior estimate and the final posteriors; by construction the
    returned prior equals the mean of the returned posteriors.
    """
    y = as_scored(test_posteriors).posteriors
    if not np.isfinite(y).all():
        raise DataError("posteriors must be finite")
    if not (0.0 < train_prior < 1.0):
        raise DataError("train prior must lie strictly inside (0, 1)")
    y = np.clip(y, EMQ_CLAMP, 1.0 - EMQ_CLAMP)
    q = train_prior
    s = y
    iterations = 0
    for iterations in range(1, max_iter + 1):
        num = (q / train_prior) * y
        den = num + ((1.0 - q) / (1.0 - train_prior)) * (1.0 - y)
        s = num / den
        q_next = float(s.mean())
        converged = abs(q_next - q) < tol
        q = q_next
        if converged:
            break
    est = PrevalenceEstimate(q, "emq", {"iterations": iterations})
    return est, s


def hellinger(a: Histogram, b: Histogram) -> float:
    """Hellinger distance sqrt(1 - sum_i sqrt(a_i * b_i)) between histograms."""
    if a.bin_count != b.bin_count:
        raise DataError("histograms must have the same number of bins")
    affinity = float(np.sqrt(a.densities * b.densities).sum())
    return float(np.sqrt(max(0.0, 1.0 - affinity)))


def class_histograms(val: ScoredSet, b: int) -> tuple[Histogram, Histogram]:
    labels = val.require_labels()
    pos = labels == 1
    if not pos.any() or pos.all():
        raise DataError("class histograms require both classes in validation data")
    return build_histogram(val.posteriors[pos], b), build_histogram(val.posteriors[~pos], b)


def hdy(val: ScoredSet, test_posteriors, b: int = 8) -> PrevalenceEstimate:
    """Distribution matching on posterior histograms under Hellinger distance.

    Scans the mixture weight over a 0.01 grid and returns the weight whose
    positive/negative validation mixture is closest to the test histogram;
    ties resolve to the smaller weight.
    """
    h_pos, h_neg = class_histograms(val, b)
    h_test = build_histogram(as_scored(test_posteriors).posteriors, b)
    steps = round(1.0 / HDY_GRID_STEP)
    grid = np.arange(0, steps + 1) / steps
    distances = np.empty(grid.size)
    for i, p in enumerate(grid):
        mix = p * h_pos.densities + (1.0 - p) * h_neg.densities
        affinity = float(np.sqrt(mix * h_test.densities).sum())
        distances[i] = np.sqrt(max(0.0, 1.0 - affinity))
    best = int(np.argmin(distances))
    return PrevalenceEstimate(float(grid[best]), "hdy", {"distance": float(distances[best])})


def gaussian_kde_eval(points: np.ndarray, at: np.ndarray, bandwidth: float) -> np.ndarray:
    """Gaussian-kernel density of `points`, evaluated at `at`."""
    z = (at[:, None] - points[None, :]) / bandwidth
    norm = bandwidth * np.sqrt(2.0 * np.pi)
    return np.exp(-0.5 * z * z).mean(axis=1) / norm


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-4) -> float:
    """Maximize a unimodal function on [lo, hi] by golden-section search.

    Exact ties shrink the bracket from both ends, so a constant objective
    converges to the bracket midpoint.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 > f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        elif f2 > f1:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            a, b = x1, x2
            x1 = b - invphi * (b - a)
            x2 = a + invphi * (b - a)
            f1, f2 = f(x1), f(x2)
    return (a + b) / 2.0


def kdey(val: ScoredSet, test_posteriors, bandwidth: float = 0.1) -> PrevalenceEstimate:
    """Mixture-weight estimate by maximizing the test log-likelihood under
    Gaussian kernel density estimates of the per-class validation scores.

    Maximizing the mean test log-likelihood of the mixture is equivalent to
    minimizing the empirical KL divergence from the test score distribution
    to the mixture.
    """
    labels = val.require_labels()
    pos = labels == 1
    if not pos.any() or pos.all():
        raise DataError("kdey requires both classes in validation data")
    y = as_scored(test_posteriors).posteriors
    dens_pos = gaussian_kde_eval(val.posteriors[pos], y, bandwidth)
    dens_neg = gaussian_kde_eval(val.posteriors[~pos], y, bandwidth)

    def log_likelihood(p: float) -> float:
        return float(np.log(p * dens_pos + (1.0 - p) * dens_neg + KDE_EPS).mean())

    p_hat = golden_section_max(log_likelihood, 0.0, 1.0)
    return PrevalenceEstimate(float(np.clip(p_hat, 0.0, 1.0)), "kdey",
                              {"loglik": log_likelihood(p_hat)})
