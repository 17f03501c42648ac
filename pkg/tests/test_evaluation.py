import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftbridge.core import DataError, LabeledSet
from shiftbridge.evaluation import (
    EstimateRecord,
    PROTOCOL_APP,
    PROTOCOL_CS_MIXTURE,
    SampleProtocol,
    ae,
    app_index_samples,
    app_samples,
    brier,
    cs_mixture_samples,
    cs_mixture_source_counts,
    ece_l2,
    sample_at_prevalence,
    shift_intensity,
)

from conftest import gauss1d


def app_proto(n_samples=10, size=50, seed=0):
    return SampleProtocol(PROTOCOL_APP, n_samples, size, seed)


class TestAppSamples:
    def test_boundary_prevalence_all_positive(self, rng):
        labels = np.array([0] * 100 + [1] * 100)
        idx = sample_at_prevalence(labels, 1.0, 40, rng)
        assert (labels[idx] == 1).all()

    def test_half_prevalence_exact_counts(self, rng):
        labels = np.array([0] * 300 + [1] * 300)
        idx = sample_at_prevalence(labels, 0.5, 250, rng)
        assert labels[idx].sum() == 125
        assert idx.size == 250

    def test_ceil_rounding(self, rng):
        labels = np.array([0] * 300 + [1] * 300)
        idx = sample_at_prevalence(labels, 0.501, 250, rng)
        assert labels[idx].sum() == int(np.ceil(0.501 * 250))

    def test_deterministic_double_run(self):
        pool = gauss1d(500, 0.5, seed=1)
        a = app_index_samples(pool.labels, app_proto(seed=7))
        b = app_index_samples(pool.labels, app_proto(seed=7))
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_sample_sizes(self):
        pool = gauss1d(400, 0.5, seed=2)
        for sample in app_samples(pool, app_proto(n_samples=5, size=37)):
            assert len(sample) == 37

    def test_replacement_flagged_on_small_pool(self):
        labels = np.array([0] * 100 + [1] * 2)
        with pytest.warns(UserWarning, match="replacement"):
            sample_at_prevalence(labels, 0.9, 50, np.random.default_rng(0))

    def test_missing_class_rejected(self):
        pool = LabeledSet(np.zeros((5, 1)), np.ones(5))
        with pytest.raises(DataError, match="class 0"):
            app_samples(pool, app_proto())


class TestCsMixture:
    def make_pools(self):
        a = LabeledSet(np.full((400, 1), 1.0), np.tile([0, 1], 200))
        b = LabeledSet(np.full((400, 1), -1.0), np.tile([0, 1], 200))
        return a, b

    def test_first_sample_pure_source(self):
        a, b = self.make_pools()
        proto = SampleProtocol(PROTOCOL_CS_MIXTURE, 100, 250, seed=3)
        samples = cs_mixture_samples(a, b, proto)
        assert (samples[0].features > 0).all()

    def test_last_sample_pure_target(self):
        a, b = self.make_pools()
        proto = SampleProtocol(PROTOCOL_CS_MIXTURE, 100, 250, seed=3)
        samples = cs_mixture_samples(a, b, proto)
        assert (samples[-1].features < 0).all()

    def test_midpoint_source_count(self):
        proto = SampleProtocol(PROTOCOL_CS_MIXTURE, 100, 250, seed=0)
        counts = cs_mixture_source_counts(proto)
        assert counts[49] == 127  # sample i=50
        a, b = self.make_pools()
        sample = cs_mixture_samples(a, b, proto)[49]
        assert int((sample.features > 0).sum()) == 127

    def test_samples_have_requested_size(self):
        a, b = self.make_pools()
        proto = SampleProtocol(PROTOCOL_CS_MIXTURE, 7, 33, seed=4)
        assert all(len(s) == 33 for s in cs_mixture_samples(a, b, proto))


class TestEceL2:
    def test_single_bin_hand_case(self):
        post = np.full(10, 0.8)
        labels = np.array([1] * 6 + [0] * 4)
        assert ece_l2(post, labels, b=15) == pytest.approx(0.04, abs=1e-12)

    def test_perfect_calibration(self):
        post = np.array([0.25] * 4 + [0.75] * 4)
        labels = np.array([1, 0, 0, 0, 1, 1, 1, 0])
        assert ece_l2(post, labels, b=4) == pytest.approx(0.0, abs=1e-15)

    def test_matches_naive_reimplementation(self, rng):
        for _ in range(5):
            post = rng.uniform(size=200)
            labels = rng.integers(0, 2, size=200)
            got = ece_l2(post, labels, b=15)
            naive = 0.0
            n = len(post)
            for i in range(15):
                members = [j for j in range(n)
                           if min(int(post[j] * 15), 14) == i]
                if not members:
                    continue
                conf = sum(post[j] for j in members) / len(members)
                frac = sum(labels[j] for j in members) / len(members)
                naive += (len(members) / n) * (frac - conf) ** 2
            assert got == pytest.approx(naive, abs=1e-12)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(DataError):
            ece_l2(np.array([0.5]), np.array([1, 0]))

    def test_permutation_invariant(self, rng):
        post = rng.uniform(size=60)
        labels = rng.integers(0, 2, size=60)
        perm = rng.permutation(60)
        assert ece_l2(post, labels) == pytest.approx(
            ece_l2(post[perm], labels[perm]), abs=1e-15)


class TestBrier:
    def test_perfect_hard_predictions(self):
        labels = np.array([1, 0, 1])
        assert brier(labels.astype(float), labels) == 0.0

    def test_constant_half(self):
        assert brier(np.full(9, 0.5), np.array([1, 0, 1, 0, 1, 0, 1, 0, 1])) == \
            pytest.approx(0.25, abs=1e-12)

    def test_matches_summation_oracle(self, rng):
        post = rng.uniform(size=150)
        labels = rng.integers(0, 2, size=150)
        total = 0.0
        for p, y in zip(post, labels):
            total += (y - p) ** 2
        assert brier(post, labels) == pytest.approx(total / 150, abs=1e-12)

    def test_permutation_invariant(self, rng):
        post = rng.uniform(size=40)
        labels = rng.integers(0, 2, size=40)
        perm = rng.permutation(40)
        assert brier(post, labels) == pytest.approx(
            brier(post[perm], labels[perm]), abs=1e-15)


class TestAe:
    def test_zero(self):
        assert ae(0.5, 0.5) == 0.0

    def test_hand_case(self):
        assert ae(0.2, 0.8) == pytest.approx(0.6)

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=50)
    def test_symmetric(self, a, b):
        assert ae(a, b) == ae(b, a)

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError):
            ae(1.2, 0.5)


class TestShiftIntensity:
    def test_ls_no_shift(self):
        assert shift_intensity("LS", train_prev=0.5, sample_prev=0.5) == 0.0

    def test_ls_large_shift(self):
        assert shift_intensity("LS", train_prev=0.1, sample_prev=0.9) == \
            pytest.approx(0.8)

    def test_cs_from_mixture_formula(self):
        proto = SampleProtocol(PROTOCOL_CS_MIXTURE, 100, 250, seed=0)
        n_src = cs_mixture_source_counts(proto)[49]
        assert shift_intensity("CS", mixture_fraction=1 - n_src / 250) == \
            pytest.approx(1 - 127 / 250)

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            shift_intensity("concept", train_prev=0.5, sample_prev=0.5)


class TestRecord:
    def test_rejects_nonfinite(self):
        with pytest.raises(DataError):
            EstimateRecord("cc", "d", 0, 0.5, "AE-quant", float("nan"))

    def test_rejects_out_of_range_shift(self):
        with pytest.raises(DataError):
            EstimateRecord("cc", "d", 0, 1.5, "AE-quant", 0.1)


def test_app_prevalences_uniform_on_grid():
    # 10k realized prevalences should be indistinguishable from U(0, 1]
    from scipy import stats

    labels = np.array([0] * 4000 + [1] * 4000)
    proto = SampleProtocol(PROTOCOL_APP, 10_000, 250, seed=42)
    realized = [labels[idx].mean() for idx in app_index_samples(labels, proto)]
    _, p_value = stats.kstest(realized, "uniform")
    assert p_value > 0.01
