import numpy as np
import pytest

from shiftbridge.cap import (
    DocRegressor,
    SCORE_MAX_CONFIDENCE,
    SCORE_NEG_ENTROPY,
    atc,
    atc_threshold,
    doc_fit,
    doc_fit_scored,
    doc_predict,
    max_confidence,
    naive_acc,
    negative_entropy,
)
from shiftbridge.core import DataError, LabeledSet, ScoredSet
from shiftbridge.evaluation import PROTOCOL_UNIFORM, SampleProtocol
from shiftbridge.models import KNN, LOGISTIC, crisp, fit, predict_posteriors

from conftest import gauss1d


class TestNaive:
    def test_separable(self):
        features = np.concatenate([-np.ones(10), np.ones(10)])[:, None]
        labels = np.array([0] * 10 + [1] * 10)
        model = fit(LOGISTIC, LabeledSet(features, labels))
        assert naive_acc(model, LabeledSet(features, labels)).acc == 1.0

    def test_complemented_labels(self):
        features = np.concatenate([-np.ones(10), np.ones(10)])[:, None]
        labels = np.array([0] * 10 + [1] * 10)
        model = fit(LOGISTIC, LabeledSet(features, labels))
        flipped = LabeledSet(features, 1 - labels)
        assert naive_acc(model, flipped).acc == 0.0

    def test_matches_recount(self):
        data = gauss1d(257, 0.4, seed=0)
        model = fit(LOGISTIC, data)
        got = naive_acc(model, data).acc
        preds = crisp(predict_posteriors(model, data.features))
        expected = sum(int(p == y) for p, y in zip(preds, data.labels)) / len(data)
        assert got == expected


class TestATC:
    def test_perfect_validation_accuracy(self):
        val = ScoredSet(np.array([0.9, 0.95, 0.05, 0.1]), np.array([1, 1, 0, 0]))
        tau = atc_threshold(val)
        assert tau == -np.inf
        est = atc(val, np.array([0.7, 0.2, 0.99]))
        assert est.acc == 1.0

    def test_self_consistency_on_validation(self, rng):
        for seed in range(6):
            g = np.random.default_rng(seed)
            post = g.uniform(size=120)
            labels = (g.uniform(size=120) < post).astype(int)
            val = ScoredSet(post, labels)
            true_acc = (crisp(post) == labels).mean()
            for score in (SCORE_MAX_CONFIDENCE, SCORE_NEG_ENTROPY):
                est = atc(val, post, score)
                assert abs(est.acc - true_acc) <= 1 / 120

    def test_quantile_matches_bruteforce_scan(self):
        for seed in range(5):
            g = np.random.default_rng(100 + seed)
            post = g.uniform(size=80)
            labels = (g.uniform(size=80) < post).astype(int)
            val = ScoredSet(post, labels)
            # test scores drawn from the validation score multiset, so every
            # threshold inside the same gap partitions them identically
            test = g.choice(post, size=60, replace=True)
            got = atc(val, test).acc

            s_val = np.sort(max_confidence(post))
            acc = (crisp(post) == labels).mean()
            candidates = np.concatenate(
                [[s_val[0] - 1.0], (s_val[:-1] + s_val[1:]) / 2, [s_val[-1] + 1.0]])
            gaps = [abs((s_val > c).mean() - acc) for c in candidates]
            tau = candidates[int(np.argmin(gaps))]
            expected = (max_confidence(test) > tau).mean()
            assert got == expected

    def test_zero_accuracy_threshold(self):
        val = ScoredSet(np.array([0.9, 0.8]), np.array([0, 0]))
        assert atc_threshold(val) == np.inf
        assert atc(val, np.array([0.99])).acc == 0.0

    def test_negative_entropy_values(self):
        s = negative_entropy(np.array([0.0, 0.5, 1.0]))
        assert s[0] == 0.0 and s[2] == 0.0
        assert s[1] == pytest.approx(-np.log(2))

    def test_unknown_score_rejected(self):
        val = ScoredSet(np.array([0.9, 0.1]), np.array([1, 0]))
        with pytest.raises(DataError, match="unknown ATC score"):
            atc(val, np.array([0.5]), score="brier")

    def test_empty_test_rejected(self):
        val = ScoredSet(np.array([0.9, 0.1]), np.array([1, 0]))
        with pytest.raises(DataError):
            atc(val, np.array([]))


def linear_doc_fixture():
    """kNN fixture where every subsample's accuracy gap is exactly twice its
    confidence gap: type A points score 1.0 and are correct, type B points
    score 0.5 and are wrong."""
    train = LabeledSet(np.array([[0.0], [0.0], [10.0], [10.0]]),
                       np.array([1, 1, 0, 1]))
    model = fit(KNN, train, k=2)
    n = 300
    features = np.concatenate([np.zeros(n // 2), np.full(n // 2, 10.0)])[:, None]
    labels = np.ones(n, dtype=int)
    return model, LabeledSet(features, labels)


class TestDoC:
    def test_identical_samples_degenerate(self):
        data = gauss1d(40, 0.5, seed=1)
        model = fit(LOGISTIC, data)
        # without replacement at full pool size every sample is the whole pool
        proto = SampleProtocol(PROTOCOL_UNIFORM, n_samples=5, size=40, seed=0)
        with pytest.raises(DataError, match="degenerate regression"):
            doc_fit(model, data, proto)

    def test_constructed_linear_fixture(self):
        model, val = linear_doc_fixture()
        proto = SampleProtocol(PROTOCOL_UNIFORM, n_samples=100, size=100, seed=2)
        reg = doc_fit(model, val, proto)
        assert reg.slope == pytest.approx(2.0, abs=1e-6)
        assert reg.intercept == pytest.approx(0.0, abs=1e-6)

    def test_residuals_match_lstsq_oracle(self):
        data = gauss1d(500, 0.5, seed=3)
        model = fit(LOGISTIC, data)
        proto = SampleProtocol(PROTOCOL_UNIFORM, n_samples=60, size=100, seed=4)
        reg = doc_fit(model, data, proto)

        # recompute the regression inputs, then solve the normal equations
        post = predict_posteriors(model, data.features)
        scored = ScoredSet(post, data.labels)
        conf = max_confidence(post)
        correct = (crisp(post) == data.labels).astype(float)
        from shiftbridge.evaluation import index_samples
        xs, ys = [], []
        for idx in index_samples(data.labels, proto):
            xs.append(conf[idx].mean() - conf.mean())
            ys.append(correct[idx].mean() - correct.mean())
        design = np.column_stack([xs, np.ones(len(xs))])
        coef, *_ = np.linalg.lstsq(design, np.asarray(ys), rcond=None)
        assert reg.slope == pytest.approx(coef[0], abs=1e-10)
        assert reg.intercept == pytest.approx(coef[1], abs=1e-10)
        assert doc_fit_scored(scored, proto).slope == reg.slope

    def test_predict_zero_gap(self):
        reg = DocRegressor(3.0, 0.01, 0.8, 0.9)
        est = doc_predict(reg, np.array([0.8, 0.8]))  # conf = 0.8 = reference
        assert est.acc == pytest.approx(0.91)

    def test_predict_slope_two_gap(self):
        reg = DocRegressor(2.0, 0.0, 0.9, 0.7)
        est = doc_predict(reg, np.array([0.8, 0.8]))  # gap = -0.1
        assert est.acc == pytest.approx(0.5)

    def test_predict_clipped(self):
        reg = DocRegressor(1.0, 0.0, 0.5, 0.97)
        est = doc_predict(reg, np.array([0.9]))  # 0.97 + 0.4 -> clip
        assert est.acc == 1.0
