"""Tree fitting, expert rules, separated scoring, serialization."""

import numpy as np
import pytest

from chebdea.dea import Panel, ReturnsToScale, score_all, scores_as_array
from chebdea.exceptions import DomainError
from chebdea.partition import (
    EXPERT_RULES,
    CategoryAssignment,
    assign_category,
    assign_expert_categories,
    assign_expert_category,
    assign_tree_categories,
    best_split,
    fit_regression_tree,
    separated_scores,
    tree_from_text,
    tree_to_text,
)

VRS = ReturnsToScale.VRS


class TestFit:
    def test_constant_target_single_leaf(self):
        rng = np.random.default_rng(0)
        features = rng.uniform(size=(40, 2))
        tree = fit_regression_tree(features, np.full(40, 3.0), min_bucket=5)
        assert tree.root.is_leaf
        assert tree.warning is None

    def test_step_function_splits_at_straddling_midpoint(self):
        values = np.arange(40.0)
        target = (values >= 10.0).astype(float)
        tree = fit_regression_tree(values[:, None], target, min_bucket=3, n_leaves=2)
        assert tree.root.feature_index == 0
        assert tree.root.threshold == pytest.approx(9.5)
        assert tree.root.left.is_leaf and tree.root.right.is_leaf
        assert tree.root.left.mean == 0.0
        assert tree.root.right.mean == 1.0

    def test_min_bucket_equal_to_n_forbids_splitting(self):
        rng = np.random.default_rng(1)
        features = rng.uniform(size=(30, 2))
        target = rng.uniform(size=30)
        tree = fit_regression_tree(features, target, min_bucket=30)
        assert tree.root.is_leaf
        assert tree.warning is not None

    def test_every_leaf_honours_min_bucket(self):
        rng = np.random.default_rng(2)
        features = rng.uniform(size=(500, 2))
        target = features[:, 0] * 2.0 + np.sin(features[:, 1] * 6) + rng.normal(0, 0.1, 500)
        tree = fit_regression_tree(features, target, min_bucket=40, max_depth=6, n_leaves=8)
        leaves = tree.leaves()
        assert all(leaf.count >= 40 for leaf in leaves)
        assert sum(leaf.count for leaf in leaves) == 500
        assert tree.root.max_depth() <= 6

    def test_prunes_to_requested_leaf_count(self):
        rng = np.random.default_rng(3)
        features = rng.uniform(size=(600, 2))
        target = features[:, 0] + 0.3 * features[:, 1] + rng.normal(0, 0.05, 600)
        tree = fit_regression_tree(features, target, min_bucket=30, max_depth=7, n_leaves=5)
        assert tree.n_leaves == 5

    def test_leaf_labels_run_left_to_right(self):
        values = np.arange(100.0)
        target = (values >= 50).astype(float) + (values >= 75).astype(float)
        tree = fit_regression_tree(values[:, None], target, min_bucket=10, n_leaves=3)
        labels = [leaf.label for leaf in tree.leaves()]
        assert labels == ["D01", "D02", "D03"]

    def test_chosen_split_maximizes_improvement_vs_exhaustive(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n = int(rng.integers(20, 120))
            features = rng.uniform(size=(n, 3))
            target = rng.normal(size=n)
            got = best_split(features, target, min_bucket=4)
            expected = _exhaustive_best(features, target, min_bucket=4)
            if expected is None:
                assert got is None
                continue
            assert got[0] == expected[0]
            assert got[1] == pytest.approx(expected[1], abs=1e-12)
            assert got[2] == pytest.approx(expected[2], rel=1e-9)


def _exhaustive_best(features, target, min_bucket):
    n, k = features.shape
    best = None
    for j in range(k):
        for threshold in _midpoints(features[:, j]):
            left = features[:, j] < threshold
            nl, nr = int(left.sum()), int((~left).sum())
            if nl < min_bucket or nr < min_bucket:
                continue
            gain = (
                ((target - target.mean()) ** 2).sum()
                - ((target[left] - target[left].mean()) ** 2).sum()
                - ((target[~left] - target[~left].mean()) ** 2).sum()
            )
            if gain <= 0:
                continue
            if best is None or gain > best[2]:
                best = (j, threshold, gain)
    return best


def _midpoints(column):
    values = np.unique(column)
    mids = 0.5 * (values[:-1] + values[1:])
    return [float(v if m <= lo else m) for lo, v, m in zip(values[:-1], values[1:], mids)]


class TestRouting:
    def test_single_leaf_routes_everything(self):
        tree = fit_regression_tree(np.zeros((10, 1)), np.zeros(10), min_bucket=10)
        assert assign_category(tree, [123.0]) == "D01"

    def test_boundary_goes_right(self):
        values = np.concatenate([np.full(20, 100.0), np.full(20, 611.0)])
        target = np.concatenate([np.zeros(20), np.ones(20)])
        tree = fit_regression_tree(values[:, None], target, min_bucket=5, n_leaves=2)
        threshold = tree.root.threshold
        left = assign_category(tree, [threshold - 1e-9])
        right = assign_category(tree, [threshold])
        assert left == "D01" and right == "D02"

    def test_population_611_convention(self):
        # a split whose threshold lands exactly on 611 routes 610 left
        values = np.concatenate([np.full(30, 222.0), np.full(30, 1000.0)])
        target = np.concatenate([np.zeros(30), np.ones(30)])
        tree = fit_regression_tree(values[:, None], target, min_bucket=5, n_leaves=2)
        tree.root.threshold = 611.0
        assert assign_category(tree, [610.0]) == "D01"
        assert assign_category(tree, [611.0]) == "D02"


class TestExpertRules:
    @pytest.mark.parametrize(
        "population,distance,expected",
        [
            (150.0, 10.0, "E01"),
            (150.0, 20.0, "E02"),
            (350.0, 10.0, "E03"),
            (350.0, 15.0, "E04"),
            (750.0, 14.99, "E05"),
            (750.0, 40.0, "E06"),
            (1500.0, 0.01, "E07"),
            (1500.0, 58.0, "E08"),
            (2500.0, 10.0, "E09"),
            (2500.0, 20.0, "E10"),
            (50000.0, 0.0, "E11"),
            (50.0, 0.0, "E11"),
        ],
    )
    def test_rule_anchors(self, population, distance, expected):
        assert assign_expert_category(population, distance) == expected

    def test_exactly_one_rule_matches_everywhere(self):
        populations = [1.0, 199.0, 200.0, 499.0, 500.0, 999.0, 1000.0, 1999.0, 2000.0, 1e6]
        distances = [0.0, 0.01, 14.99, 15.0, 60.0]
        for p in populations:
            for t in distances:
                hits = [rule.label for rule in EXPERT_RULES if rule.matches(p, t)]
                assert len(hits) == 1, (p, t, hits)
                assert assign_expert_category(p, t) == hits[0]

    def test_invalid_inputs(self):
        with pytest.raises(DomainError):
            assign_expert_category(0.0, 1.0)
        with pytest.raises(DomainError):
            assign_expert_category(100.0, -1.0)


class TestAssignments:
    def test_sizes_add_up(self):
        assignment = CategoryAssignment({"a": "L", "b": "L", "c": "R"})
        assert assignment.sizes == {"L": 2, "R": 1}
        assert assignment.n_units == 3
        assert assignment.categories == ("L", "R")

    def test_tree_and_expert_assignment_builders(self):
        features = np.array([[100.0, 3.0], [5000.0, 0.0]])
        expert = assign_expert_categories(features[:, 0], features[:, 1], ["a", "b"])
        assert expert.labels == {"a": "E01", "b": "E11"}
        tree = fit_regression_tree(np.zeros((4, 1)), np.zeros(4), min_bucket=4)
        routed = assign_tree_categories(tree, np.zeros((2, 1)), ["a", "b"])
        assert routed.labels == {"a": "D01", "b": "D01"}


class TestSeparatedScores:
    def _random_panel(self, rng, n):
        X = rng.uniform(0.05, 1.0, size=(n, 2))
        Y = rng.uniform(0.05, 1.0, size=(n, 2))
        return Panel([f"u{j}" for j in range(n)], X, Y)

    def test_single_category_is_bit_exact_with_full_sample(self):
        rng = np.random.default_rng(5)
        panel = self._random_panel(rng, 12)
        assignment = CategoryAssignment({d: "ALL" for d in panel.dmu_ids})
        full = scores_as_array(score_all(panel, VRS))
        sep = scores_as_array(separated_scores(panel, assignment, VRS))
        assert full.tobytes() == sep.tobytes()

    def test_singleton_category_scores_two(self):
        rng = np.random.default_rng(6)
        panel = self._random_panel(rng, 6)
        labels = {d: ("SOLO" if j == 2 else "REST") for j, d in enumerate(panel.dmu_ids)}
        sep = separated_scores(panel, CategoryAssignment(labels), VRS)
        assert sep[2].score == pytest.approx(2.0, abs=1e-9)

    def test_separated_dominates_full_sample(self):
        rng = np.random.default_rng(7)
        for _ in range(6):
            n = int(rng.integers(6, 14))
            panel = self._random_panel(rng, n)
            labels = {d: f"G{rng.integers(3)}" for d in panel.dmu_ids}
            full = scores_as_array(score_all(panel, VRS))
            sep = scores_as_array(separated_scores(panel, CategoryAssignment(labels), VRS))
            assert (sep >= full - 1e-9).all()

    def test_missing_assignment_raises(self):
        rng = np.random.default_rng(8)
        panel = self._random_panel(rng, 4)
        with pytest.raises(DomainError):
            separated_scores(panel, CategoryAssignment({"u0": "A"}), VRS)

    def test_output_order_matches_panel(self):
        rng = np.random.default_rng(9)
        panel = self._random_panel(rng, 8)
        labels = {d: f"G{j % 3}" for j, d in enumerate(panel.dmu_ids)}
        sep = separated_scores(panel, CategoryAssignment(labels), VRS)
        assert [s.dmu_id for s in sep] == list(panel.dmu_ids)


class TestSerialization:
    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(10)
        features = rng.uniform(size=(300, 2))
        target = features[:, 0] * 3.0 + rng.normal(0, 0.2, 300)
        tree = fit_regression_tree(
            features, target, min_bucket=20, max_depth=5, n_leaves=6,
            feature_names=("population", "distance"),
        )
        text = tree_to_text(tree)
        rebuilt = tree_from_text(text)
        assert tree_to_text(rebuilt) == text

        def structure(node):
            if node.is_leaf:
                return ("leaf", node.label, node.count, node.mean)
            return (
                "split",
                node.feature,
                node.threshold,
                structure(node.left),
                structure(node.right),
            )

        assert structure(rebuilt.root) == structure(tree.root)

    def test_routing_survives_round_trip(self):
        rng = np.random.default_rng(11)
        features = rng.uniform(size=(200, 2))
        target = (features[:, 0] > 0.5).astype(float)
        tree = fit_regression_tree(features, target, min_bucket=15, n_leaves=4)
        rebuilt = tree_from_text(tree_to_text(tree))
        probes = rng.uniform(size=(50, 2))
        for row in probes:
            assert assign_category(tree, row) == assign_category(rebuilt, row)

    def test_bad_text_raises(self):
        with pytest.raises(DomainError):
            tree_from_text("not a tree")
        with pytest.raises(DomainError):
            tree_from_text("")
