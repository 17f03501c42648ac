import numpy as np
import pytest

from shiftbridge.core import LabeledSet, ScoredSet


def gauss1d(n: int, prior: float, seed: int) -> LabeledSet:
    """Two unit-variance Gaussians at -1 (negative) and +1 (positive)."""
    rng = np.random.default_rng(seed)
    labels = (rng.uniform(size=n) < prior).astype(int)
    features = rng.normal(loc=2.0 * labels - 1.0, scale=1.0)[:, None]
    return LabeledSet(features, labels)


def gauss1d_at_counts(n_pos: int, n_neg: int, seed: int) -> LabeledSet:
    """Same generator with exact class counts."""
    rng = np.random.default_rng(seed)
    labels = np.array([1] * n_pos + [0] * n_neg)
    features = rng.normal(loc=2.0 * labels - 1.0, scale=1.0)[:, None]
    return LabeledSet(features, labels)


def true_posterior_1d(x: np.ndarray) -> np.ndarray:
    """Exact positive posterior of the gauss1d generator at prior 0.5."""
    return 1.0 / (1.0 + np.exp(-2.0 * np.asarray(x, dtype=float)))


def scored_gauss(n: int, prior: float, seed: int) -> ScoredSet:
    """Labeled scores drawn from gauss1d with the exact posterior attached."""
    data = gauss1d(n, prior, seed)
    return ScoredSet(true_posterior_1d(data.features[:, 0]), data.labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
