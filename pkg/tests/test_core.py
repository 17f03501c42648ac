import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftbridge.core import (
    CalibrationMap,
    DataError,
    LabeledSet,
    SplitSpec,
    build_histogram,
    enforce_monotone,
    interpolate,
    load_csv,
    save_csv,
    smooth_window1,
    split_stratified,
    split_stratified_indices,
)


def make_set(n_pos, n_neg, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.array([1] * n_pos + [0] * n_neg)
    return LabeledSet(rng.normal(size=(n_pos + n_neg, 2)), labels)


class TestSplitStratified:
    def test_balanced_100_rows(self):
        data = make_set(50, 50)
        tr, va, te = split_stratified(data, SplitSpec(0.5, 0.25, 0.25, seed=0))
        assert (len(tr), len(va), len(te)) == (50, 25, 25)
        # class share of each split within one instance of the pool's 50%
        for part in (tr, va, te):
            assert abs(part.labels.sum() - 0.5 * len(part)) <= 1

    def test_single_class_pool_errors(self):
        data = LabeledSet(np.zeros((4, 1)), np.ones(4))
        with pytest.raises(DataError, match="class 0"):
            split_stratified(data, SplitSpec(seed=1))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        labels = (rng.uniform(size=1000) < 0.37).astype(int)
        first = split_stratified_indices(labels, SplitSpec(seed=7))
        second = split_stratified_indices(labels, SplitSpec(seed=7))
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_partition_is_exact(self):
        labels = (np.random.default_rng(5).uniform(size=333) < 0.4).astype(int)
        parts = split_stratified_indices(labels, SplitSpec(0.6, 0.2, 0.2, seed=11))
        merged = np.concatenate(parts)
        assert merged.size == labels.size
        assert np.array_equal(np.sort(merged), np.arange(labels.size))

    @given(
        n_pos=st.integers(6, 120),
        n_neg=st.integers(6, 120),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, n_pos, n_neg, seed):
        labels = np.array([1] * n_pos + [0] * n_neg)
        parts = split_stratified_indices(labels, SplitSpec(seed=seed))
        merged = np.sort(np.concatenate(parts))
        assert np.array_equal(merged, np.arange(labels.size))
        for part, frac in zip(parts, (0.5, 0.25, 0.25)):
            for c, n_c in ((0, n_neg), (1, n_pos)):
                got = int((labels[part] == c).sum())
                assert abs(got - n_c * frac) <= 1

    def test_class_stream_independent_of_other_class(self):
        # appending rows of class 1 must not change class 0's assignment
        labels = np.array([0] * 40 + [1] * 40)
        grown = np.array([0] * 40 + [1] * 44)
        spec = SplitSpec(seed=9)
        base = split_stratified_indices(labels, spec)
        bigger = split_stratified_indices(grown, spec)
        for a, b in zip(base, bigger):
            assert np.array_equal(a[a < 40], b[b < 40])


class TestBuildHistogram:
    def test_two_points_two_bins(self):
        h = build_histogram([0.1, 0.9], 2)
        assert np.allclose(h.densities, [0.5, 0.5])

    def test_one_lands_in_last_bin(self):
        h = build_histogram([1.0], 4)
        assert np.allclose(h.densities, [0, 0, 0, 1])

    def test_uniform_draws_match_direct_counts(self, rng):
        draws = rng.uniform(size=1000)
        h = build_histogram(draws, 10)
        assert np.all(np.abs(h.densities - 0.1) < 0.05)
        # independent recount with explicit edges
        counts = [((draws >= i / 10) & ((draws < (i + 1) / 10) | (i == 9))).sum()
                  for i in range(10)]
        assert np.allclose(h.densities, np.asarray(counts) / 1000)

    def test_empty_errors(self):
        with pytest.raises(DataError):
            build_histogram([], 4)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.integers(2, 30))
    @settings(max_examples=60)
    def test_densities_sum_to_one(self, values, b):
        assert abs(build_histogram(values, b).densities.sum() - 1.0) < 1e-9


class TestEnforceMonotone:
    def test_dip_is_lifted_to_previous_value(self):
        assert np.allclose(enforce_monotone([0.2, 0.1, 0.4]), [0.2, 0.2, 0.4])

    def test_identity_on_sorted(self):
        assert np.allclose(enforce_monotone([0.1, 0.2, 0.3]), [0.1, 0.2, 0.3])

    def test_running_maximum(self):
        assert np.allclose(enforce_monotone([0.9, 0.1, 0.1]), [0.9, 0.9, 0.9])

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=50))
    def test_idempotent(self, values):
        once = enforce_monotone(values)
        assert np.array_equal(enforce_monotone(once), once)
        assert np.all(np.diff(once) >= 0)


class TestSmoothWindow1:
    def test_single_value_padding(self):
        assert np.allclose(smooth_window1([0.5]), [0.5])

    def test_hand_case(self):
        out = smooth_window1([0.3, 0.6])
        assert np.allclose(out, [0.3, (0.3 + 0.6 + 1.0) / 3])

    def test_constant_interior(self):
        out = smooth_window1([0.4] * 6)
        assert np.allclose(out[1:-1], 0.4)

    def test_length_preserved(self):
        assert smooth_window1(np.linspace(0, 1, 7)).size == 7


class TestInterpolate:
    def test_identity_map(self):
        m = CalibrationMap.from_knots([(0, 0), (1, 1)])
        assert interpolate(m, 0.37) == pytest.approx(0.37, abs=1e-15)

    def test_hand_interpolation(self):
        m = CalibrationMap.from_knots([(0, 0), (0.5, 0.2), (1, 1)])
        assert interpolate(m, 0.25) == pytest.approx(0.1, abs=1e-15)

    def test_endpoints_fixed(self):
        m = CalibrationMap.from_knots([(0, 0), (0.3, 0.1), (0.7, 0.9), (1, 1)])
        assert interpolate(m, 0.0) == 0.0
        assert interpolate(m, 1.0) == 1.0

    @given(
        knots=st.lists(
            st.tuples(st.floats(0.01, 0.99), st.floats(0, 1)), min_size=1, max_size=8
        ),
        y1=st.floats(0, 1),
        y2=st.floats(0, 1),
    )
    @settings(max_examples=80)
    def test_monotone(self, knots, y1, y2):
        xs = sorted({x for x, _ in knots})
        ys = np.sort([y for _, y in knots])[: len(xs)]
        m = CalibrationMap(
            np.array([0.0, *xs, 1.0]), np.array([0.0, *ys, 1.0])
        )
        lo, hi = min(y1, y2), max(y1, y2)
        assert interpolate(m, lo) <= interpolate(m, hi) + 1e-12

    def test_invalid_maps_rejected(self):
        with pytest.raises(DataError):
            CalibrationMap(np.array([0.0, 1.0]), np.array([0.1, 1.0]))
        with pytest.raises(DataError):
            CalibrationMap(np.array([0.0, 0.5, 0.5, 1.0]), np.array([0.0, 0.2, 0.3, 1.0]))
        with pytest.raises(DataError):
            CalibrationMap(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.8, 0.2]))


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        data = make_set(10, 8, seed=2)
        path = tmp_path / "data.csv"
        save_csv(data, path)
        loaded = load_csv(path)
        assert np.allclose(loaded.features, data.features)
        assert np.array_equal(loaded.labels, data.labels)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,label\n1,2,0\n")
        with pytest.raises(DataError, match="header"):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_csv(tmp_path / "nope.csv")

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n1.0,2\n")
        with pytest.raises(DataError, match="label"):
            load_csv(path)
