"""Shift-simulation protocols and evaluation metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DataError, LabeledSet, bin_index

PROTOCOL_APP = "APP"
PROTOCOL_CS_MIXTURE = "CS-mixture"
PROTOCOL_UNIFORM = "uniform-random"

METRIC_ECE = "ECE"
METRIC_BRIER = "Brier"
METRIC_AE_QUANT = "AE-quant"
METRIC_AE_ACC = "AE-acc"


@dataclass(frozen=True)
class SampleProtocol:
    kind: str = PROTOCOL_APP
    n_samples: int = 100
    size: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (PROTOCOL_APP, PROTOCOL_CS_MIXTURE, PROTOCOL_UNIFORM):
            raise DataError(f"unknown protocol kind {self.kind!r}")
        if self.size < 1 or self.n_samples < 1:
            raise DataError("protocol needs size >= 1 and n_samples >= 1")


@dataclass(frozen=True)
class EstimateRecord:
    """One (method, sample, shift, metric, value) row of experiment output."""

    method: str
    dataset: str
    sample_id: int
    shift_intensity: float
    metric: str
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise DataError("record value must be finite")
        if not (0.0 <= self.shift_intensity <= 1.0):
            raise DataError("shift intensity must lie in [0, 1]")


def _draw(rng: np.random.Generator, pool: np.ndarray, count: int, what: str) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if pool.size >= count:
        return rng.choice(pool, size=count, replace=False)
    warnings.warn(f"{what} pool ({pool.size}) smaller than draw ({count}); "
                  "sampling with replacement", stacklevel=3)
    return rng.choice(pool, size=count, replace=True)


def sample_at_prevalence(labels: np.ndarray, p: float, size: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Indices of a size-row sample with ceil(p*size) positives."""
    labels = np.asarray(labels)
    n_pos = math.ceil(p * size)
    pos_idx = np.flatnonzero(labels == 1)
    neg_idx = np.flatnonzero(labels == 0)
    pos = _draw(rng, pos_idx, n_pos, "positive")
    neg = _draw(rng, neg_idx, size - n_pos, "negative")
    return np.concatenate([pos, neg])


def app_prevalences(proto: SampleProtocol) -> np.ndarray:
    """The target prevalences the APP protocol draws for a given seed."""
    rng = np.random.default_rng(proto.seed)
    return rng.uniform(0.0, 1.0, size=proto.n_samples)


def app_index_samples(labels: np.ndarray, proto: SampleProtocol) -> list[np.ndarray]:
    """Artificial-prevalence samples: each draws a uniform target prevalence,
    then subsamples each class to realize it."""
    labels = np.asarray(labels)
    if not (labels == 1).any():
        raise DataError("cannot run APP: class 1 has no instances")
    if not (labels == 0).any():
        raise DataError("cannot run APP: class 0 has no instances")
    rng = np.random.default_rng(proto.seed)
    targets = rng.uniform(0.0, 1.0, size=proto.n_samples)
    return [sample_at_prevalence(labels, p, proto.size, rng) for p in targets]


def uniform_index_samples(n_pool: int, proto: SampleProtocol) -> list[np.ndarray]:
    """Plain random subsamples, one independent draw per sample."""
    if n_pool < 1:
        raise DataError("cannot sample from an empty pool")
    rng = np.random.default_rng(proto.seed)
    pool = np.arange(n_pool)
    return [_draw(rng, pool, proto.size, "uniform") for _ in range(proto.n_samples)]


def index_samples(labels: np.ndarray, proto: SampleProtocol) -> list[np.ndarray]:
    if proto.kind == PROTOCOL_APP:
        return app_index_samples(labels, proto)
    if proto.kind == PROTOCOL_UNIFORM:
        return uniform_index_samples(np.asarray(labels).size, proto)
    raise DataError(f"protocol {proto.kind!r} cannot sample a single pool")


def app_samples(pool: LabeledSet, proto: SampleProtocol) -> list[LabeledSet]:
    return [pool.subset(idx) for idx in app_index_samples(pool.labels, proto)]


def cs_mixture_source_counts(proto: SampleProtocol) -> np.ndarray:
    """How many rows of sample i come from the source pool: a linear ramp
    from all-source (i=1) down to all-target (i=n_samples)."""
    if proto.n_samples == 1:
        return np.array([proto.size])
    i = np.arange(1, proto.n_samples + 1)
    return np.ceil(proto.size * (1.0 - (i - 1) / (proto.n_samples - 1))).astype(int)


def cs_mixture_samples(source: LabeledSet, target: LabeledSet,
                       proto: SampleProtocol) -> list[LabeledSet]:
    """Progressively interpolated mixtures of two test pools.

    Every sample is drawn from scratch, so draws are independent across
    samples.
    """
    if len(source) < 1 or len(target) < 1:
        raise DataError("both mixture pools must be non-empty")
    rng = np.random.default_rng(proto.seed)
    out = []
    for n_src in cs_mixture_source_counts(proto):
        idx_a = _draw(rng, np.arange(len(source)), int(n_src), "source")
        idx_b = _draw(rng, np.arange(len(target)), proto.size - int(n_src), "target")
        features = np.vstack([source.features[idx_a], target.features[idx_b]])
        labels = np.concatenate([source.labels[idx_a], target.labels[idx_b]])
        out.append(LabeledSet(features, labels))
    return out


def ece_l2(posteriors, labels, b: int = 15) -> float:
    """L2 expected calibration error under equal-width binning.

    Sum over occupied bins of (|B|/n) * (positive fraction - mean
    confidence)^2; empty bins contribute nothing.
    """
    y = np.asarray(posteriors, dtype=float)
    lab = np.asarray(labels, dtype=float)
    if y.shape != lab.shape or y.size == 0:
        raise DataError("posteriors and labels must be aligned and non-empty")
    bins = bin_index(y, b)
    total = 0.0
    for i in range(b):
        mask = bins == i
        count = int(mask.sum())
        if count == 0:
            continue
        gap = lab[mask].mean() - y[mask].mean()
        total += (count / y.size) * gap * gap
    return float(total)


def brier(posteriors, labels) -> float:
    """Mean squared distance between posteriors and binary labels."""
    y = np.asarray(posteriors, dtype=float)
    lab = np.asarray(labels, dtype=float)
    if y.shape != lab.shape or y.size == 0:
        raise DataError("posteriors and labels must be aligned and non-empty")
    return float(((lab - y) ** 2).mean())


def ae(true_value: float, estimate: float) -> float:
    """Absolute error between a true quantity and its estimate."""
    if not (0.0 <= true_value <= 1.0 and 0.0 <= estimate <= 1.0):
        raise DataError("absolute error expects values in [0, 1]")
    return abs(true_value - estimate)


def shift_intensity(kind: str, *, train_prev: float | None = None,
                    sample_prev: float | None = None,
                    mixture_fraction: float | None = None) -> float:
    """Scalar in [0,1] quantifying how far a sample sits from IID conditions.

    Label shift: |sample prevalence - training prevalence|. Covariate
    shift: the fraction of the sample drawn from the target pool.
    """
    if kind == "LS":
        if train_prev is None or sample_prev is None:
            raise DataError("LS intensity needs train_prev and sample_prev")
        return abs(sample_prev - train_prev)
    if kind == "CS":
        if mixture_fraction is None:
            raise DataError("CS intensity needs mixture_fraction")
        if not (0.0 <= mixture_fraction <= 1.0):
            raise DataError("mixture fraction must lie in [0, 1]")
        return float(mixture_fraction)
    raise DataError(f"unknown shift kind {kind!r}")
