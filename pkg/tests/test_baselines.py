import numpy as np
import pytest

from featopt import RandomSource
from featopt.baselines import (
    fit_forest,
    fit_linear,
    fit_tree,
    permutation_importance,
    predict_forest,
    predict_linear,
    predict_tree,
)
from featopt.errors import InvalidArgumentError, InvalidInputError


class TestLinear:
    def test_exact_linear_relationship(self):
        g = np.random.Generator(np.random.PCG64(0))
        X = g.normal(size=(80, 4))
        true_w = np.array([1.5, -2.0, 0.5, 0.0])
        y = X @ true_w + 0.7
        # Closed-form oracle confirms an exact fit is attainable.
        lstsq_residual = np.linalg.lstsq(np.c_[X, np.ones(80)], y, rcond=None)[1]
        assert lstsq_residual[0] < 1e-18
        model = fit_linear(X, y, "regression", epochs=4000)
        mse = float(np.mean((predict_linear(model, X) - y) ** 2))
        assert mse < 1e-4

    def test_all_zero_features_fit_the_mean(self):
        y = np.array([1.0, 3.0, 5.0, 7.0])
        model = fit_linear(np.zeros((4, 2)), y, "regression", epochs=2000)
        np.testing.assert_allclose(predict_linear(model, np.zeros((2, 2))), y.mean(), atol=1e-6)

    def test_constant_target_fits_intercept_only(self):
        g = np.random.Generator(np.random.PCG64(1))
        X = g.normal(size=(20, 3))
        model = fit_linear(X, np.full(20, 4.2), "regression")
        np.testing.assert_array_equal(model.weights, np.zeros(3))
        assert float(model.intercept) == 4.2

    def test_separable_classification_reaches_full_accuracy(self):
        g = np.random.Generator(np.random.PCG64(2))
        X = np.vstack([g.normal(size=(30, 2)) + 4.0, g.normal(size=(30, 2)) - 4.0])
        y = np.array([0] * 30 + [1] * 30)
        model = fit_linear(X, y, "classification", epochs=2000)
        assert np.mean(predict_linear(model, X) == y) == 1.0

    def test_empty_input_rejected(self):
        with pytest.raises(InvalidInputError):
            fit_linear(np.zeros((0, 2)), np.zeros(0), "regression")


def brute_force_best_split(X, y, task, min_leaf=1):
    """Independent exhaustive CART split search (loops, no shortcuts)."""
    n, k = X.shape
    best = None
    best_cost = np.inf
    for f in range(k):
        values = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            left = y[X[:, f] < threshold]
            right = y[X[:, f] >= threshold]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            if task == "classification":
                def gini(part):
                    counts = np.bincount(part.astype(int))
                    frac = counts / len(part)
                    return 1.0 - float((frac**2).sum())

                cost = (len(left) * gini(left) + len(right) * gini(right)) / n
            else:
                cost = (len(left) * left.var() + len(right) * right.var()) / n
            if cost < best_cost:
                best_cost = cost
                best = (f, threshold)
    return best


class TestTree:
    def test_pure_labels_make_a_leaf(self):
        X = np.arange(8, dtype=float).reshape(4, 2)
        root = fit_tree(X, np.zeros(4, dtype=int), "classification", n_classes=2)
        assert root.is_leaf

    def test_perfect_single_split(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        root = fit_tree(X, y, "classification", min_leaf=1)
        assert not root.is_leaf
        assert root.left.is_leaf and root.right.is_leaf
        assert np.mean(predict_tree(root, X, "classification") == y) == 1.0

    @pytest.mark.parametrize("task", ["classification", "regression"])
    def test_root_split_matches_exhaustive_oracle(self, task):
        for seed in range(8):
            g = np.random.Generator(np.random.PCG64(seed))
            n = int(g.integers(8, 65))
            X = g.normal(size=(n, 3))
            if task == "classification":
                y = (X[:, 0] + 0.3 * g.normal(size=n) > 0).astype(int)
                if len(np.unique(y)) < 2:
                    continue
            else:
                y = X[:, 1] * 2 + g.normal(size=n)
            root = fit_tree(X, y, task, max_depth=1, min_leaf=1)
            expected = brute_force_best_split(X, y, task)
            assert (root.feature, root.threshold) == expected

    def test_training_accuracy_beats_majority_vote(self):
        for seed in range(5):
            g = np.random.Generator(np.random.PCG64(seed))
            X = g.normal(size=(60, 4))
            y = (X[:, 0] * X[:, 1] > 0).astype(int)
            root = fit_tree(X, y, "classification")
            acc = np.mean(predict_tree(root, X, "classification") == y)
            majority = max(np.mean(y == 0), np.mean(y == 1))
            assert acc >= majority


class TestForest:
    def test_degenerate_forest_equals_single_tree(self):
        g = np.random.Generator(np.random.PCG64(3))
        X = g.normal(size=(50, 4))
        y = X[:, 0] - X[:, 2] + g.normal(0, 0.1, 50)
        forest = fit_forest(
            X, y, "regression", n_trees=1, rng=RandomSource(0),
            bootstrap=False, features_per_split=4,
        )
        tree = fit_tree(X, y, "regression")
        np.testing.assert_array_equal(
            predict_forest(forest, X), predict_tree(tree, X, "regression")
        )

    def test_constant_target_predicts_constant(self):
        g = np.random.Generator(np.random.PCG64(4))
        X = g.normal(size=(30, 3))
        forest = fit_forest(X, np.full(30, 2.5), "regression", 5, RandomSource(1))
        np.testing.assert_array_equal(predict_forest(forest, X), np.full(30, 2.5))

    def test_informative_features_beat_noise(self):
        from featopt.metrics import regression_metrics

        g = np.random.Generator(np.random.PCG64(5))
        n = 300
        X = g.normal(size=(n, 10))
        y = 2 * X[:, 0] - X[:, 1] + g.normal(0, 0.1, n)
        train, test = np.arange(200), np.arange(200, n)
        r2 = {}
        for name, cols in (("informative", [0, 1]), ("noise", [5, 6])):
            forest = fit_forest(X[np.ix_(train, cols)], y[train], "regression", 30, RandomSource(2))
            preds = predict_forest(forest, X[np.ix_(test, cols)])
            r2[name] = regression_metrics(y[test], preds)["r2"]
        assert r2["informative"] > r2["noise"]

    def test_deterministic_for_fixed_seed(self):
        g = np.random.Generator(np.random.PCG64(6))
        X = g.normal(size=(40, 3))
        y = (X[:, 0] > 0).astype(int)
        preds = []
        for _ in range(2):
            forest = fit_forest(X, y, "classification", 10, RandomSource(7))
            preds.append(predict_forest(forest, X))
            assert forest.tree_seeds == fit_forest(X, y, "classification", 10, RandomSource(7)).tree_seeds
        np.testing.assert_array_equal(preds[0], preds[1])

    def test_needs_at_least_one_tree(self):
        with pytest.raises(InvalidArgumentError):
            fit_forest(np.zeros((4, 1)), np.zeros(4), "regression", 0, RandomSource(0))


class IdentityRng:
    def permutation(self, n):
        return np.arange(n)


class TestPermutationImportance:
    @staticmethod
    def _metric(y_true, y_pred):
        return -float(np.mean((np.asarray(y_true) - np.asarray(y_pred)) ** 2))

    def test_unused_feature_scores_zero(self):
        # A depth-1 tree only ever splits on one feature; the rest score 0.
        g = np.random.Generator(np.random.PCG64(8))
        X = g.normal(size=(80, 3))
        y = (X[:, 0] > 0).astype(float) * 2.0
        root = fit_tree(X, y, "regression", max_depth=1)
        scores = permutation_importance(
            lambda rows: predict_tree(root, rows, "regression"),
            X, y, self._metric, RandomSource(3),
        )
        assert scores[1] == 0.0 and scores[2] == 0.0
        assert scores[0] > 0.0

    def test_planted_feature_scores_highest(self):
        g = np.random.Generator(np.random.PCG64(9))
        X = g.normal(size=(120, 4))
        y = X[:, 0].copy()
        forest = fit_forest(X, y, "regression", 20, RandomSource(4))
        scores = permutation_importance(
            lambda rows: predict_forest(forest, rows), X, y, self._metric, RandomSource(5)
        )
        assert np.argmax(scores) == 0
        assert scores[0] > max(scores[1:])

    def test_identity_permutation_scores_zero(self):
        g = np.random.Generator(np.random.PCG64(10))
        X = g.normal(size=(40, 3))
        y = X[:, 0] + X[:, 1]
        model = fit_linear(X, y, "regression")
        scores = permutation_importance(
            lambda rows: predict_linear(model, rows), X, y, self._metric, IdentityRng()
        )
        np.testing.assert_array_equal(scores, np.zeros(3))
