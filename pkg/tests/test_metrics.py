import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gce.data import Dataset
from gce.errors import DataError
from gce.explain import ExplanationSet, dbm
from gce.groups import Grouping, calibrate_epsilon, default_epsilon_grid, group_stats
from gce.metrics import (
    MetricsReport,
    correctness,
    coverage,
    pairwise_report,
    similarity,
)
from gce.models import LinearModel, forward, forward_batch


def brute_force_correctness(model, data, grouping, i, j, delta, eps):
    """Independent O(n^2) oracle written with plain python loops."""
    src = data.rows[grouping.members(i)]
    dst = data.rows[grouping.members(j)]
    hits = 0
    for a, x in enumerate(src):
        rx = forward(model, x + delta)
        found = False
        for b, xp in enumerate(dst):
            if i == j and a == b:
                continue
            rp = forward(model, xp)
            dist = 0.0
            for c in range(rx.size):
                diff = rx[c] - rp[c]
                dist += diff * diff
            if dist <= eps:
                found = True
                break
        hits += found
    return hits / len(src)


def brute_force_coverage(model, data, grouping, i, j, delta, eps):
    dst = data.rows[grouping.members(j)]
    src = data.rows[grouping.members(i)]
    hits = 0
    for b, x in enumerate(dst):
        rx = forward(model, x)
        found = False
        for a, xp in enumerate(src):
            if i == j and a == b:
                continue
            rp = forward(model, xp + delta)
            dist = 0.0
            for c in range(rx.size):
                diff = rx[c] - rp[c]
                dist += diff * diff
            if dist <= eps:
                found = True
                break
        hits += found
    return hits / len(dst)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    n0, n1 = rng.integers(3, 25, size=2)
    rows = rng.normal(size=(n0 + n1, d))
    labels = np.array([0] * n0 + [1] * n1)
    ds = Dataset(rows, tuple(f"f{c}" for c in range(d)))
    grouping = Grouping(labels, 2)
    model = LinearModel(rng.normal(size=(2, d)))
    delta = rng.normal(size=d)
    eps = float(rng.uniform(0.1, 4.0))
    return model, ds, grouping, delta, eps


class TestCorrectnessAndCoverage:
    def test_self_similarity_with_huge_epsilon(self):
        rows = np.vstack([np.random.default_rng(0).normal(size=(6, 2))] * 1)
        ds = Dataset(rows, ("a", "b"))
        grouping = Grouping(np.array([0] * 3 + [1] * 3), 2)
        model = LinearModel(np.eye(2))
        assert correctness(model, ds, grouping, 0, 0, np.zeros(2), 1e9) == 1.0
        assert coverage(model, ds, grouping, 0, 0, np.zeros(2), 1e9) == 1.0

    def test_far_groups_zero(self):
        rows = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
        ds = Dataset(rows, ("a", "b"))
        grouping = Grouping(np.array([0, 0, 1, 1]), 2)
        model = LinearModel(np.eye(2))
        # squared distance between groups is ~100, epsilon 1
        assert correctness(model, ds, grouping, 0, 1, np.zeros(2), 1.0) == 0.0
        assert coverage(model, ds, grouping, 0, 1, np.zeros(2), 1.0) == 0.0

    def test_three_point_groups_match_brute_force(self):
        rows = np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [3.0, 2.0], [2.0, 3.0]]
        )
        ds = Dataset(rows, ("a", "b"))
        grouping = Grouping(np.array([0, 0, 0, 1, 1, 1]), 2)
        model = LinearModel(np.eye(2))
        delta = np.array([2.0, 2.0])
        for eps in (0.25, 1.0, 4.0):
            assert correctness(
                model, ds, grouping, 0, 1, delta, eps
            ) == brute_force_correctness(model, ds, grouping, 0, 1, delta, eps)
            assert coverage(
                model, ds, grouping, 0, 1, delta, eps
            ) == brute_force_coverage(model, ds, grouping, 0, 1, delta, eps)

    @given(st.integers(0, 100_000))
    @settings(max_examples=60)
    def test_brute_force_equivalence(self, seed):
        model, ds, grouping, delta, eps = random_instance(seed)
        assert correctness(
            model, ds, grouping, 0, 1, delta, eps
        ) == brute_force_correctness(model, ds, grouping, 0, 1, delta, eps)
        assert coverage(
            model, ds, grouping, 0, 1, delta, eps
        ) == brute_force_coverage(model, ds, grouping, 0, 1, delta, eps)

    @given(st.integers(0, 100_000))
    @settings(max_examples=40)
    def test_monotone_in_epsilon(self, seed):
        model, ds, grouping, delta, eps = random_instance(seed)
        cr = [
            correctness(model, ds, grouping, 0, 1, delta, e)
            for e in (0.5 * eps, eps, 2.0 * eps)
        ]
        cv = [
            coverage(model, ds, grouping, 0, 1, delta, e)
            for e in (0.5 * eps, eps, 2.0 * eps)
        ]
        assert cr == sorted(cr)
        assert cv == sorted(cv)

    @given(st.integers(0, 100_000))
    @settings(max_examples=40)
    def test_linear_duality(self, seed):
        # with a linear map, translating the sources forward is the same
        # comparison as translating the targets backward
        model, ds, grouping, delta, eps = random_instance(seed)
        assert correctness(model, ds, grouping, 0, 1, delta, eps) == coverage(
            model, ds, grouping, 1, 0, -delta, eps
        )

    def test_nonzero_delta_with_equal_groups_rejected(self):
        ds = Dataset(np.zeros((4, 2)), ("a", "b"))
        grouping = Grouping(np.array([0, 0, 1, 1]), 2)
        model = LinearModel(np.eye(2))
        with pytest.raises(DataError):
            correctness(model, ds, grouping, 0, 0, np.ones(2), 1.0)


class TestSimilarity:
    def test_subset_support_scores_one(self):
        assert similarity(np.array([1.0, 0.0, -2.0]), np.array([3.0, 1.0, 5.0])) == 1.0

    def test_disjoint_support_scores_zero(self):
        assert similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0

    def test_hand_computed_half(self):
        assert similarity(np.array([1.0, 1.0, 0.0]), np.array([5.0, 0.0, 0.0])) == 0.5

    def test_zero_explanation_rejected(self):
        with pytest.raises(DataError):
            similarity(np.zeros(3), np.ones(3))

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=8))
    def test_self_similarity_is_one(self, values):
        e = np.array(values)
        if np.all(e == 0.0):
            return
        assert similarity(e, e) == 1.0


class TestTwoGaussianConstructions:
    def _setup(self, seed, s0, s1, n=120):
        rng = np.random.default_rng(seed)
        g0 = rng.normal(0.0, s0, size=(n, 2))
        g1 = rng.normal(0.0, s1, size=(n, 2)) + np.array([4.0, 0.0])
        rows = np.vstack([g0, g1])
        ds = Dataset(rows, ("a", "b"))
        grouping = Grouping(np.array([0] * n + [1] * n), 2)
        model = LinearModel(np.eye(2))
        eps = calibrate_epsilon(rows, grouping, default_epsilon_grid(rows))
        delta = dbm(group_stats(ds, grouping, model)).basis[1]
        return model, ds, grouping, delta, eps

    def test_equal_variance_translation_works_both_ways(self):
        model, ds, grouping, delta, eps = self._setup(seed=2, s0=0.8, s1=0.8)
        assert correctness(model, ds, grouping, 0, 1, delta, eps) >= 0.9
        assert coverage(model, ds, grouping, 0, 1, delta, eps) >= 0.9

    def test_wide_target_gives_poor_coverage(self):
        model, ds, grouping, delta, eps = self._setup(seed=0, s0=0.25, s1=1.0)
        assert correctness(model, ds, grouping, 0, 1, delta, eps) >= 0.9
        assert coverage(model, ds, grouping, 0, 1, delta, eps) <= 0.7

    def test_reversed_translation_mirrors_the_pattern(self):
        model, ds, grouping, delta, eps = self._setup(seed=0, s0=0.25, s1=1.0)
        assert coverage(model, ds, grouping, 1, 0, -delta, eps) >= 0.9
        assert correctness(model, ds, grouping, 1, 0, -delta, eps) <= 0.7


class TestPairwiseReport:
    def test_identical_groups_and_zero_deltas_give_ones(self):
        rows = np.vstack([np.random.default_rng(0).normal(size=(5, 2))] * 2)
        ds = Dataset(rows, ("a", "b"))
        grouping = Grouping(np.array([0] * 5 + [1] * 5), 2)
        model = LinearModel(np.eye(2))
        exps = ExplanationSet("tgt", 0, 0.0, np.zeros((2, 2)))
        # epsilon accepts within-group spacing, so self-similarity is 1 too
        report = pairwise_report(model, ds, grouping, exps, 50.0)
        assert np.array_equal(report.correctness, np.ones((2, 2)))
        assert np.array_equal(report.coverage, np.ones((2, 2)))
        assert report.avg_correctness == 1.0

    def test_cells_equal_single_metric_calls(self, synth_bundle):
        b = synth_bundle
        exps = dbm(b.stats)
        report = pairwise_report(b.model, b.dataset, b.grouping, exps, b.epsilon)
        from gce.explain import construct

        delta = construct(exps, 1, 2)
        assert report.correctness[1, 2] == correctness(
            b.model, b.dataset, b.grouping, 1, 2, delta, b.epsilon
        )
        assert report.coverage[2, 1] == coverage(
            b.model, b.dataset, b.grouping, 2, 1, construct(exps, 2, 1), b.epsilon
        )
        assert report.correctness[3, 3] == correctness(
            b.model, b.dataset, b.grouping, 3, 3, np.zeros(b.dataset.d), b.epsilon
        )

    def test_average_excludes_diagonal(self):
        cr = np.array([[1.0, 0.5], [0.25, 1.0]])
        report = MetricsReport(cr, cr, 0.1, float(np.mean([0.5, 0.25])), 0.375)
        assert report.avg_correctness == 0.375

    def test_round_trips(self):
        cr = np.array([[1.0, 0.5], [0.25, 1.0]])
        report = MetricsReport(cr, cr * 0.5, 0.1, 0.375, 0.1875)
        again = MetricsReport.from_dict(report.to_dict())
        assert np.array_equal(again.correctness, report.correctness)
        assert np.array_equal(again.coverage, report.coverage)
        assert again.epsilon == report.epsilon

    def test_csv_has_row_per_ordered_pair(self):
        cr = np.array([[1.0, 0.5], [0.25, 1.0]])
        report = MetricsReport(cr, cr, 0.1, 0.375, 0.375)
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "i,j,correctness,coverage"
        assert len(lines) == 1 + 4
        assert lines[2].startswith("0,1,0.5,")
