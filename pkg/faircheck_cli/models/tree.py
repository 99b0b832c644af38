"""CART trees: Gini classification trees and the regression trees used by boosting."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..config import TREE_MAX_DEPTH, TREE_MIN_SAMPLES_LEAF
from ..dataset import EncodedDataset
from ..errors import ArgumentError
from .base import Scorer

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = TREE_MAX_DEPTH
    min_samples_leaf: int = TREE_MIN_SAMPLES_LEAF
    impurity: str = "gini"

    def __post_init__(self):
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ArgumentError(f"max_depth and min_samples_leaf must be >= 1: {self}")
        if self.impurity != "gini":
            raise ArgumentError(f"Only Gini impurity is supported, got '{self.impurity}'")


@dataclass(frozen=True, eq=False)
class TreeArrays:
    """Flat binary tree. Rows with ``x[feature] <= threshold`` go left."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeArrays":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int64),
            threshold=np.asarray(doc["threshold"], dtype=float),
            left=np.asarray(doc["left"], dtype=np.int64),
            right=np.asarray(doc["right"], dtype=np.int64),
            value=np.asarray(doc["value"], dtype=float),
            n_samples=np.asarray(doc["n_samples"], dtype=np.int64),
        )


def _tolerance(scale: float) -> float:
    return 1e-12 * max(1.0, abs(scale))


def _best_split(
    X: np.ndarray,
    target: np.ndarray,
    orders: np.ndarray,
    in_node: np.ndarray,
    min_samples_leaf: int,
) -> Optional[tuple[int, float, float]]:
    """Lowest-cost split of the rows flagged in ``in_node``.

    Cost is the children's summed ``sum(t^2) - sum(t)^2 / n``: the squared error
    for residuals and, for 0/1 targets, n * Gini / 2. Ties go to the lowest
    feature index, then the lowest threshold.
    """
    best = None
    for j in range(X.shape[1]):
        order = orders[:, j]
        idx = order[in_node[order]]
        m = len(idx)
        if m < 2 * min_samples_leaf:
            return None
        xs = X[idx, j]
        ts = target[idx]
        cum = np.cumsum(ts)
        cum2 = np.cumsum(ts * ts)
        total, total2 = cum[-1], cum2[-1]

        lo, hi = min_samples_leaf - 1, m - min_samples_leaf - 1
        pos = np.arange(lo, hi + 1)
        pos = pos[xs[pos] < xs[pos + 1]]
        if not len(pos):
            continue
        n_left = pos + 1.0
        n_right = m - n_left
        cost = (cum2[pos] - cum[pos] ** 2 / n_left) + (
            (total2 - cum2[pos]) - (total - cum[pos]) ** 2 / n_right
        )
        lowest = cost.min()
        k = int(np.flatnonzero(cost <= lowest + _tolerance(lowest))[0])
        if best is None or cost[k] < best[2] - _tolerance(best[2]):
            i = pos[k]
            best = (j, float((xs[i] + xs[i + 1]) / 2.0), float(cost[k]))
    return best


def grow_tree(
    X: np.ndarray,
    target: np.ndarray,
    max_depth: int,
    min_samples_leaf: int,
    leaf_value: Callable[[np.ndarray], float],
    orders: Optional[np.ndarray] = None,
) -> TreeArrays:
    """Grow a depth-limited binary tree greedily.

    An impure node is split whenever a split leaving ``min_samples_leaf`` rows on
    each side exists, even with zero impurity decrease.

    Args:
        X: Feature matrix
        target: Per-row target (0/1 labels or boosting residuals)
        max_depth: Maximum depth of any leaf
        min_samples_leaf: Minimum rows in a leaf
        leaf_value: Maps the row indices of a leaf to its value
        orders: Precomputed ``argsort(X, axis=0)`` reused across trees

    Returns:
        The fitted TreeArrays
    """
    n = X.shape[0]
    if orders is None:
        orders = np.argsort(X, axis=0, kind="stable")
    feature, threshold, left, right, value, n_samples = [], [], [], [], [], []

    def build(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(leaf_value(rows))
        n_samples.append(len(rows))

        ts = target[rows]
        impurity = float(ts @ ts - ts.sum() ** 2 / len(rows))
        if depth >= max_depth or impurity <= _tolerance(ts @ ts):
            return node
        in_node = np.zeros(n, dtype=bool)
        in_node[rows] = True
        split = _best_split(X, target, orders, in_node, min_samples_leaf)
        if split is None:
            return node

        j, t, _ = split
        goes_left = X[rows, j] <= t
        feature[node] = j
        threshold[node] = t
        left[node] = build(rows[goes_left], depth + 1)
        right[node] = build(rows[~goes_left], depth + 1)
        return node

    if n == 0:
        raise ArgumentError("Cannot grow a tree on an empty dataset")
    build(np.arange(n), 0)
    return TreeArrays(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
        n_samples=np.asarray(n_samples, dtype=np.int64),
    )


@dataclass(frozen=True, eq=False)
class TreeScorer(Scorer):
    """Score = positive fraction of the leaf a row falls in."""
    tree: TreeArrays
    params: TreeParams = field(default_factory=TreeParams)
    family = "tree"

    def score(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict(X)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params.__dict__.copy(),
            "tree": self.tree.to_dict(),
            "training": {"depth": self.tree.depth(), "n_nodes": self.tree.n_nodes},
        }


def train_tree(ds: EncodedDataset, params: TreeParams = TreeParams()) -> TreeScorer:
    """CART with Gini splits and midpoint thresholds."""
    if ds.n == 0:
        raise ArgumentError("Cannot train a tree on an empty dataset")
    y = ds.y.astype(float)
    positives = ds.y.astype(np.int64)
    tree = grow_tree(
        ds.X,
        y,
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        leaf_value=lambda rows: int(positives[rows].sum()) / len(rows),
    )
    logger.debug("Tree: %d nodes, depth %d", tree.n_nodes, tree.depth())
    return TreeScorer(tree=tree, params=params)
