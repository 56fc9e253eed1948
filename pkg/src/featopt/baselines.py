"""Reference models: linear/logistic regression, a CART tree, and a bagged
random forest. The forest doubles as the downstream predictor that scores
refined feature sets, so it is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError
from .mathcore import RandomSource, row_softmax

CLASSIFICATION = "classification"
REGRESSION = "regression"


# ---------------------------------------------------------------------------
# linear / logistic regression
# ---------------------------------------------------------------------------


@dataclass
class LinearModel:
    weights: np.ndarray  # k (regression) or k x C (classification)
    intercept: np.ndarray  # () or C
    task: str


def _auto_lr(X_aug: np.ndarray) -> float:
    # 1 / L where L = 2 * lambda_max(X'X) / n is the MSE gradient Lipschitz
    # constant; also stable for the (smoother) cross-entropy objective.
    n = X_aug.shape[0]
    lam_max = float(np.linalg.eigvalsh(X_aug.T @ X_aug / n).max())
    return 1.0 / (2.0 * lam_max + 1e-12)


def fit_linear(
    X: np.ndarray, y: np.ndarray, task: str, epochs: int = 1000, lr: float | None = None
) -> LinearModel:
    """Full-batch gradient descent on MSE (regression) or softmax
    cross-entropy (classification). Expects standardized features."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise InvalidInputError("X must not be empty")
    n, k = X.shape
    X_aug = np.hstack([X, np.ones((n, 1))])
    if lr is None:
        lr = _auto_lr(X_aug)

    if task == REGRESSION:
        y = np.asarray(y, dtype=np.float64)
        if float(y.max()) == float(y.min()):
            return LinearModel(np.zeros(k), np.asarray(float(y[0])), task)
        w = np.zeros(k + 1)
        for _ in range(epochs):
            residual = X_aug @ w - y
            w -= lr * (2.0 / n) * (X_aug.T @ residual)
        return LinearModel(w[:k], np.asarray(w[k]), task)

    labels = np.asarray(y, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    w = np.zeros((k + 1, n_classes))
    for _ in range(epochs):
        probs = row_softmax(X_aug @ w)
        w -= lr * (X_aug.T @ (probs - onehot)) / n
    return LinearModel(w[:k], w[k], task)


def predict_linear(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    raw = X @ model.weights + model.intercept
    if model.task == CLASSIFICATION:
        return raw.argmax(axis=1).astype(np.int64)
    return raw


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    """Split node (feature, threshold, children) or leaf (prediction)."""

    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    prediction: np.ndarray | float | None = None  # class histogram or mean

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _leaf(y_sub: np.ndarray, task: str, n_classes: int) -> TreeNode:
    if task == CLASSIFICATION:
        hist = np.bincount(y_sub.astype(np.int64), minlength=n_classes) / y_sub.size
        return TreeNode(prediction=hist)
    return TreeNode(prediction=float(y_sub.mean()))


def _best_split(X, y, rows, candidates, task, min_leaf, n_classes):
    """Exhaustive search over midpoints of sorted distinct values.

    Returns (feature, threshold) minimizing weighted child impurity, or
    None when no legal split exists. Ties go to the lowest feature id and
    the lowest threshold.
    """
    n = rows.size
    y_sub = y[rows]
    best_cost = np.inf
    best = None
    positions = np.arange(1, n)
    for f in candidates:
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        yo = y_sub[order]
        legal = (vs[1:] > vs[:-1]) & (positions >= min_leaf) & (n - positions >= min_leaf)
        if not legal.any():
            continue
        left_n = positions
        right_n = n - positions
        if task == CLASSIFICATION:
            onehot = np.zeros((n, n_classes))
            onehot[np.arange(n), yo.astype(np.int64)] = 1.0
            left_counts = np.cumsum(onehot, axis=0)[:-1]
            right_counts = left_counts[-1] + onehot[-1] - left_counts
            # n_l * gini_l = n_l - sum_c count_c^2 / n_l
            cost = (
                left_n
                - (left_counts**2).sum(axis=1) / left_n
                + right_n
                - (right_counts**2).sum(axis=1) / right_n
            ) / n
        else:
            yo = yo.astype(np.float64)
            cs = np.cumsum(yo)[:-1]
            cs2 = np.cumsum(yo * yo)[:-1]
            tot, tot2 = yo.sum(), (yo * yo).sum()
            # n_l * var_l = sum(y^2) - (sum y)^2 / n_l, clipped at 0
            left_cost = np.maximum(cs2 - cs * cs / left_n, 0.0)
            right_cost = np.maximum((tot2 - cs2) - (tot - cs) ** 2 / right_n, 0.0)
            cost = (left_cost + right_cost) / n
        cost = np.where(legal, cost, np.inf)
        j = int(np.argmin(cost))
        if cost[j] < best_cost:
            best_cost = cost[j]
            best = (int(f), float((vs[j] + vs[j + 1]) / 2.0))
    return best


def _is_pure(y_sub: np.ndarray, task: str) -> bool:
    if task == CLASSIFICATION:
        return np.unique(y_sub).size == 1
    return float(y_sub.max()) == float(y_sub.min())


def _grow(X, y, rows, depth, task, max_depth, min_leaf, n_classes, rng, m_features):
    y_sub = y[rows]
    if depth >= max_depth or rows.size < 2 * min_leaf or _is_pure(y_sub, task):
        return _leaf(y_sub, task, n_classes)
    k = X.shape[1]
    if rng is not None and m_features < k:
        candidates = np.sort(rng.permutation(k)[:m_features])
    else:
        candidates = np.arange(k)
    split = _best_split(X, y, rows, candidates, task, min_leaf, n_classes)
    if split is None:
        return _leaf(y_sub, task, n_classes)
    f, threshold = split
    mask = X[rows, f] < threshold
    left = _grow(X, y, rows[mask], depth + 1, task, max_depth, min_leaf, n_classes, rng, m_features)
    right = _grow(X, y, rows[~mask], depth + 1, task, max_depth, min_leaf, n_classes, rng, m_features)
    return TreeNode(feature=f, threshold=threshold, left=left, right=right)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    task: str,
    max_depth: int = 12,
    min_leaf: int = 2,
    n_classes: int | None = None,
) -> TreeNode:
    """Greedy CART: Gini impurity for classification, variance for
    regression, exhaustive threshold search, deterministic tie-breaks."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.size == 0:
        raise InvalidInputError("X must not be empty")
    if task == CLASSIFICATION and n_classes is None:
        n_classes = int(y.max()) + 1
    return _grow(
        X, y, np.arange(X.shape[0]), 0, task, max_depth, min_leaf, n_classes or 0, None, X.shape[1]
    )


def _fill_predictions(node, X, rows, out, task):
    if node.is_leaf:
        if task == CLASSIFICATION:
            out[rows] = int(np.argmax(node.prediction))
        else:
            out[rows] = node.prediction
        return
    mask = X[rows, node.feature] < node.threshold
    _fill_predictions(node.left, X, rows[mask], out, task)
    _fill_predictions(node.right, X, rows[~mask], out, task)


def predict_tree(root: TreeNode, X: np.ndarray, task: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.float64)
    _fill_predictions(root, X, np.arange(X.shape[0]), out, task)
    if task == CLASSIFICATION:
        return out.astype(np.int64)
    return out


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------


@dataclass
class ForestModel:
    trees: list[TreeNode] = field(default_factory=list)
    tree_seeds: list[int] = field(default_factory=list)
    task: str = REGRESSION
    n_classes: int = 0
    features_per_split: int = 0


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    task: str,
    n_trees: int,
    rng: RandomSource,
    max_depth: int = 12,
    min_leaf: int = 2,
    bootstrap: bool = True,
    features_per_split: int | None = None,
) -> ForestModel:
    """Bagged CART trees; per-split feature subsets of ceil(sqrt(k)) for
    classification and ceil(k/3) for regression unless overridden."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if n_trees < 1:
        raise InvalidArgumentError("n_trees must be >= 1")
    n, k = X.shape
    if features_per_split is None:
        if task == CLASSIFICATION:
            features_per_split = int(np.ceil(np.sqrt(k)))
        else:
            features_per_split = int(np.ceil(k / 3.0))
    features_per_split = min(features_per_split, k)
    n_classes = int(y.max()) + 1 if task == CLASSIFICATION else 0

    model = ForestModel(
        task=task, n_classes=n_classes, features_per_split=features_per_split
    )
    for _ in range(n_trees):
        seed = int(rng.integers(0, 2**62))
        tree_rng = RandomSource(seed)
        rows = (
            tree_rng.integers(0, n, size=n).astype(np.int64)
            if bootstrap
            else np.arange(n)
        )
        tree = _grow(
            X, y, rows, 0, task, max_depth, min_leaf, n_classes, tree_rng, features_per_split
        )
        model.trees.append(tree)
        model.tree_seeds.append(seed)
    return model


def predict_forest(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    per_tree = np.stack([predict_tree(t, X, model.task) for t in model.trees])
    if model.task == CLASSIFICATION:
        votes = np.apply_along_axis(
            lambda col: np.bincount(col.astype(np.int64), minlength=model.n_classes),
            0,
            per_tree,
        )
        return votes.argmax(axis=0).astype(np.int64)
    return per_tree.mean(axis=0)


# ---------------------------------------------------------------------------
# permutation importance
# ---------------------------------------------------------------------------


def permutation_importance(
    predict,
    X_val: np.ndarray,
    y_val: np.ndarray,
    metric,
    rng: RandomSource,
    n_repeats: int = 3,
) -> np.ndarray:
    """Per-feature drop of a higher-is-better metric after shuffling that
    column on the validation split, averaged over ``n_repeats`` shuffles."""
    X_val = np.asarray(X_val, dtype=np.float64)
    n, k = X_val.shape
    base = metric(y_val, predict(X_val))
    scores = np.zeros(k)
    for f in range(k):
        drop = 0.0
        for _ in range(n_repeats):
            perm = rng.permutation(n)
            shuffled = X_val.copy()
            shuffled[:, f] = X_val[perm, f]
            drop += base - metric(y_val, predict(shuffled))
        scores[f] = drop / n_repeats
    return scores
