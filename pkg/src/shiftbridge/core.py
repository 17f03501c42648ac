"""Shared domain types: labeled/scored datasets, histograms, calibration maps.

Everything here is immutable after construction and safe to share across
threads; the operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_THRESHOLD = 0.5


class DataError(ValueError):
    """Raised for malformed or degenerate input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledSet:
    """Feature matrix (n x d) with binary labels in {0, 1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DataError("features must be a non-empty 2-D matrix")
        labels = np.asarray(self.labels)
        if labels.shape != (features.shape[0],):
            raise DataError("labels must be a vector aligned with feature rows")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must contain only 0 or 1")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def prevalence(self) -> float:
        return float(self.labels.mean())

    def subset(self, indices: np.ndarray) -> "LabeledSet":
        return LabeledSet(self.features[indices], self.labels[indices])


@dataclass(frozen=True)
class ScoredSet:
    """Posterior probabilities in [0, 1], optionally aligned with labels."""

    posteriors: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        post = np.asarray(self.posteriors, dtype=float)
        if post.ndim != 1 or post.size < 1:
            raise DataError("posteriors must be a non-empty vector")
        if not np.isfinite(post).all() or post.min() < 0.0 or post.max() > 1.0:
            raise DataError("posteriors must lie in [0, 1]")
        object.__setattr__(self, "posteriors", _frozen(post))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != post.shape:
                raise DataError("labels must align with posteriors")
            if not np.isin(labels, (0, 1)).all():
                raise DataError("labels must contain only 0 or 1")
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))

    def __len__(self) -> int:
        return self.posteriors.size

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("operation requires a labeled ScoredSet")
        return self.labels

    def subset(self, indices: np.ndarray) -> "ScoredSet":
        labels = None if self.labels is None else self.labels[indices]
        return ScoredSet(self.posteriors[indices], labels)


def as_scored(data) -> ScoredSet:
    """Coerce a raw posterior vector (or pass through a ScoredSet)."""
    if isinstance(data, ScoredSet):
        return data
    return ScoredSet(np.asarray(data, dtype=float))


@dataclass(frozen=True)
class CalibrationMap:
    """Monotone piecewise-linear map [0,1] -> [0,1] through fixed endpoints.

    Knot inputs are strictly increasing, starting at (0, 0) and ending at
    (1, 1); outputs are non-decreasing, so the interpolant is monotone.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.inputs, dtype=float)
        ys = np.asarray(self.outputs, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
            raise DataError("knots must be two aligned vectors of length >= 2")
        if xs[0] != 0.0 or xs[-1] != 1.0 or ys[0] != 0.0 or ys[-1] != 1.0:
            raise DataError("calibration map must start at (0,0) and end at (1,1)")
        if not (np.diff(xs) > 0).all():
            raise DataError("knot inputs must be strictly increasing")
        if not (np.diff(ys) >= 0).all():
            raise DataError("knot outputs must be non-decreasing")
        object.__setattr__(self, "inputs", _frozen(xs))
        object.__setattr__(self, "outputs", _frozen(ys))

    @classmethod
    def from_knots(cls, knots) -> "CalibrationMap":
        xs, ys = zip(*knots)
        return cls(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.inputs.tolist(), self.outputs.tolist()))

    def __call__(self, y_raw):
        return interpolate(self, y_raw)


@dataclass(frozen=True)
class Histogram:
    """Equal-width b-bin density over [0, 1]."""

    densities: np.ndarray
    empty: bool = False

    def __post_init__(self):
        dens = np.asarray(self.densities, dtype=float)
        if dens.ndim != 1 or dens.size < 2:
            raise DataError("histogram needs at least 2 bins")
        if (dens < 0).any():
            raise DataError("densities must be non-negative")
        total = dens.sum()
        if self.empty:
            if total != 0.0:
                raise DataError("empty histogram must have all-zero densities")
        elif abs(total - 1.0) > 1e-9:
            raise DataError("densities must sum to 1")
        object.__setattr__(self, "densities", _frozen(dens))

    @property
    def bin_count(self) -> int:
        return self.densities.size


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the seed of the split RNG."""

    train_fraction: float = 0.5
    val_fraction: float = 0.25
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise DataError("all split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError("split fractions must sum to 1")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)


def _largest_remainder(targets: np.ndarray, total: int) -> np.ndarray:
    """Integer apportionment of `total` following real-valued `targets`."""
    base = np.floor(targets).astype(int)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(targets - base), kind="stable")
        for i in order[:short]:
            base[i] += 1
    elif short < 0:
        order = np.argsort(targets - base, kind="stable")
        for i in order[:-short]:
            base[i] -= 1
    return base


def split_stratified_indices(labels: np.ndarray, spec: SplitSpec):
    """Partition row indices into train/val/test with per-class stratification.

    Split sizes follow the global fractions exactly (largest-remainder
    rounding); each class's share of every split stays within one instance
    of its pool proportion. Each class is shuffled with its own RNG stream
    derived from (seed, class), so edits to one class leave the other
    class's ordering untouched.
    """
    labels = np.asarray(labels)
    n = labels.size
    classes = (0, 1)
    class_idx = {}
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise DataError(f"cannot stratify class {c}: no instances")
        rng = np.random.default_rng([spec.seed, c])
        class_idx[c] = idx[rng.permutation(idx.size)]

    totals = _largest_remainder(n * np.asarray(spec.fractions), n)
    counts = np.array([class_idx[c].size for c in classes], dtype=float)
    remaining = counts.copy()
    alloc = np.zeros((len(classes), 3), dtype=int)
    frac_left = 1.0
    for j, frac in enumerate(spec.fractions[:2]):
        share = frac / frac_left
        alloc[:, j] = np.minimum(
            _largest_remainder(remaining * share, int(totals[j])),
            remaining.astype(int),
        )
        remaining -= alloc[:, j]
        frac_left -= frac
    alloc[:, 2] = remaining.astype(int)

    for ci, c in enumerate(classes):
        if (alloc[ci] < 1).any():
            raise DataError(
                f"cannot stratify class {c}: {class_idx[c].size} instances are "
                f"too few for fractions {spec.fractions}"
            )

    parts = []
    for j in range(3):
        chunks = []
        for ci, c in enumerate(classes):
            start = int(alloc[ci, :j].sum())
            chunks.append(class_idx[c][start:start + alloc[ci, j]])
        parts.append(np.sort(np.concatenate(chunks)))
    return tuple(parts)


def split_stratified(data: LabeledSet, spec: SplitSpec):
    """Stratified train/val/test split of a labeled set."""
    idx_tr, idx_val, idx_te = split_stratified_indices(data.labels, spec)
    return data.subset(idx_tr), data.subset(idx_val), data.subset(idx_te)


def bin_index(posteriors: np.ndarray, b: int) -> np.ndarray:
    """Equal-width bin assignment on [0,1]: floor(y*b) with 1.0 in the last bin."""
    y = np.asarray(posteriors, dtype=float)
    return np.minimum((y * b).astype(int), b - 1)


def build_histogram(posteriors, b: int) -> Histogram:
    """Equal-width histogram of posteriors, normalized to densities."""
    y = np.asarray(posteriors, dtype=float)
    if y.size == 0:
        raise DataError("cannot build a histogram from an empty set")
    if b < 2:
        raise DataError("histogram needs at least 2 bins")
    counts = np.bincount(bin_index(y, b), minlength=b).astype(float)
    return Histogram(counts / y.size)


def enforce_monotone(values) -> np.ndarray:
    """Rewrite a sequence as its running maximum (idempotent)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DataError("cannot monotonize an empty sequence")
    return np.maximum.accumulate(v)


def smooth_window1(values) -> np.ndarray:
    """Window-1 moving average after padding the sequence with 0 and 1."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DataError("cannot smooth an empty sequence")
    padded = np.concatenate(([0.0], v, [1.0]))
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def interpolate(cal_map: CalibrationMap, y_raw):
    """Piecewise-linear interpolation through the map's knots."""
    y = np.asarray(y_raw, dtype=float)
    out = np.interp(y, cal_map.inputs, cal_map.outputs)
    return float(out) if np.isscalar(y_raw) else out


def map_from_bin_values(raw_values, postprocess: bool = True) -> CalibrationMap:
    """Calibration map with knots at bin centers, monotonized then smoothed."""
    v = np.asarray(raw_values, dtype=float)
    b = v.size
    if postprocess:
        v = smooth_window1(enforce_monotone(v))
    centers = (np.arange(b) + 0.5) / b
    xs = np.concatenate(([0.0], centers, [1.0]))
    ys = np.concatenate(([0.0], np.clip(v, 0.0, 1.0), [1.0]))
    return CalibrationMap(xs, ys)


def load_csv(path) -> LabeledSet:
    """Read a labeled dataset from CSV with header f0..f{d-1},label."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed CSV in {path}: {exc}") from exc
    cols = header.split(",")
    expected = [f"f{i}" for i in range(len(cols) - 1)] + ["label"]
    if cols != expected:
        raise DataError(f"{path}: header must be f0..f{len(cols) - 2},label")
    if body.shape[1] != len(cols):
        raise DataError(f"{path}: row width does not match header")
    labels = body[:, -1]
    if not np.isin(labels, (0.0, 1.0)).all():
        raise DataError(f"{path}: label column must contain only 0 or 1")
    return LabeledSet(body[:, :-1], labels.astype(np.int64))


def save_csv(data: LabeledSet, path) -> None:
    header = ",".join([f"f{i}" for i in range(data.dim)] + ["label"])
    body = np.column_stack([data.features, data.labels])
    np.savetxt(path, body, delimiter=",", header=header, comments="")
