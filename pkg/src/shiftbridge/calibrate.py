"""Post-hoc calibrators targeting the test distribution.

Each fit returns a :class:`Calibrator` that maps raw posteriors in [0,1]
to calibrated posteriors in [0,1]. Calibrators are immutable, callable,
and serializable to a JSON document (form tag plus parameters) so they
can be reused across CLI runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_THRESHOLD,
    CalibrationMap,
    DataError,
    LabeledSet,
    ScoredSet,
    as_scored,
    map_from_bin_values,
)
from .models import fit_logistic_gd, sigmoid
from .quantify import (
    DEGENERATE_RATE_GAP,
    class_histograms,
    emq,
    hdy,
    rates_from_scores,
)

FORM_PLATT = "sigmoid-params"
FORM_AFFINE = "affine-params"
FORM_MAP = "calibration-map"
FORM_EMQ = "emq-state"


@dataclass(frozen=True)
class Calibrator:
    """A fitted calibration transform, tagged by its functional form."""

    form: str
    a: float = 0.0
    b: float = 0.0
    beta: float = 1.0
    gamma: float = 0.0
    sigmoid_composed: bool = False
    cal_map: CalibrationMap | None = None
    train_prior: float = 0.5
    final_prior: float = 0.5

    def apply(self, posteriors) -> np.ndarray:
        y = np.asarray(posteriors, dtype=float)
        if self.form == FORM_PLATT:
            return sigmoid(self.a * y + self.b)
        if self.form == FORM_AFFINE:
            out = y * self.beta + self.gamma
            if self.sigmoid_composed:
                return sigmoid(out)
            return np.clip(out, 0.0, 1.0)
        if self.form == FORM_MAP:
            return self.cal_map(y)
        if self.form == FORM_EMQ:
            num = (self.final_prior / self.train_prior) * y
            den = num + ((1.0 - self.final_prior) / (1.0 - self.train_prior)) * (1.0 - y)
            return num / np.maximum(den, 1e-300)
        raise DataError(f"unknown calibrator form {self.form!r}")

    __call__ = apply

    def to_dict(self) -> dict:
        doc = {"form": self.form}
        if self.form == FORM_PLATT:
            doc.update(a=self.a, b=self.b)
        elif self.form == FORM_AFFINE:
            doc.update(beta=self.beta, gamma=self.gamma, sigmoid=self.sigmoid_composed)
        elif self.form == FORM_MAP:
            doc.update(knots=self.cal_map.knots)
        elif self.form == FORM_EMQ:
            doc.update(train_prior=self.train_prior, final_prior=self.final_prior)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Calibrator":
        form = doc["form"]
        if form == FORM_PLATT:
            return cls(FORM_PLATT, a=float(doc["a"]), b=float(doc["b"]))
        if form == FORM_AFFINE:
            return cls(FORM_AFFINE, beta=float(doc["beta"]), gamma=float(doc["gamma"]),
                       sigmoid_composed=bool(doc["sigmoid"]))
        if form == FORM_MAP:
            return cls(FORM_MAP, cal_map=CalibrationMap.from_knots(doc["knots"]))
        if form == FORM_EMQ:
            return cls(FORM_EMQ, train_prior=float(doc["train_prior"]),
                       final_prior=float(doc["final_prior"]))
        raise DataError(f"unknown calibrator form {form!r}")

    @classmethod
    def from_json(cls, text: str) -> "Calibrator":
        return cls.from_dict(json.loads(text))


def identity_calibrator() -> Calibrator:
    return Calibrator(FORM_MAP, cal_map=CalibrationMap.from_knots([(0.0, 0.0), (1.0, 1.0)]))


def platt_fit(val: ScoredSet, tol: float = 1e-8, max_iter: int = 5000) -> Calibrator:
    """Fit sigmoid(a*y + b) to the validation labels by log-loss descent.

    Initialization is the identity-leaning (a=1, b=0), making the fit
    deterministic.
    """
    labels = val.require_labels()
    if not (labels == 1).any() or not (labels == 0).any():
        raise DataError("Platt scaling requires both classes in validation data")
    params = fit_logistic_gd(
        val.posteriors[:, None], labels,
        init=np.array([1.0, 0.0]), tol=tol, max_iter=max_iter,
    )
    return Calibrator(FORM_PLATT, a=float(params[0]), b=float(params[1]))


def paccal_from_scores(val: ScoredSet, test_posteriors, t: float = DEFAULT_THRESHOLD) -> Calibrator:
    """Affine prior correction of the posteriors, from soft validation rates.

    The transform y*beta + gamma applies the same linear adjustment that
    turns a mean posterior into an adjusted prevalence estimate, so the
    mean calibrated output reproduces that prevalence estimate. If any
    transformed test posterior leaves [0,1], a sigmoid is composed after
    the affine map for all outputs (recorded in the calibrator).
    """
    rates = rates_from_scores(val, soft=True, t=t)
    gap = rates.tpr - rates.fpr
    if abs(gap) < DEGENERATE_RATE_GAP:
        raise DataError("unadjustable: validation tpr and fpr are too close")
    beta = 1.0 / gap
    gamma = -rates.fpr / gap
    y = as_scored(test_posteriors).posteriors
    transformed = y * beta + gamma
    needs_sigmoid = bool((transformed < 0.0).any() or (transformed > 1.0).any())
    return Calibrator(FORM_AFFINE, beta=beta, gamma=gamma, sigmoid_composed=needs_sigmoid)


def paccal_fit(model, val: LabeledSet, test_posteriors, t: float = DEFAULT_THRESHOLD) -> Calibrator:
    scores = ScoredSet(model.predict_posteriors(val.features), val.labels)
    return paccal_from_scores(scores, test_posteriors, t)


def mixture_bin_values(h_pos, h_neg, p_hat: float) -> np.ndarray:
    """Positive proportion of each bin of the p_hat-weighted class mixture.

    Bins with no mixture mass keep their bin center (identity behavior).
    """
    if h_pos.bin_count != h_neg.bin_count:
        raise DataError("class histograms must share the bin count")
    b = h_pos.bin_count
    centers = (np.arange(b) + 0.5) / b
    pos_mass = p_hat * h_pos.densities
    mix_mass = pos_mass + (1.0 - p_hat) * h_neg.densities
    return np.where(mix_mass > 0.0,
                    np.divide(pos_mass, mix_mass, where=mix_mass > 0.0),
                    centers)


def dmcal_fit(val: ScoredSet, test_posteriors, b: int = 8) -> Calibrator:
    """Distribution-matching calibration.

    Estimates the test prevalence by histogram mixture matching, then
    reads off the positive proportion of each mixture bin as that bin's
    calibrated value; the value sequence is monotonized, smoothed, and
    interpolated into a continuous map.
    """
    p_hat = hdy(val, test_posteriors, b).p
    h_pos, h_neg = class_histograms(val, b)
    values = mixture_bin_values(h_pos, h_neg, p_hat)
    return Calibrator(FORM_MAP, cal_map=map_from_bin_values(values))


def emq_fit(test_posteriors, train_prior: float, tol: float = 1e-6, max_iter: int = 1000) -> Calibrator:
    """EMQ as a calibrator: store the converged prior and apply the
    corresponding Bayes rescaling to any posterior."""
    est, _ = emq(test_posteriors, train_prior, tol, max_iter)
    return Calibrator(FORM_EMQ, train_prior=float(train_prior), final_prior=est.p)


def emq_calibrate(test_posteriors, train_prior: float, tol: float = 1e-6, max_iter: int = 1000) -> np.ndarray:
    """Return the final posteriors of the EMQ iteration on the test scores."""
    _, posteriors = emq(test_posteriors, train_prior, tol, max_iter)
    return posteriors
