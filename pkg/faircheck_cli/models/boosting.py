"""Gradient-boosted regression trees for the logistic loss."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..config import GBM_DEPTH, GBM_ROUNDS, GBM_SHRINKAGE
from ..dataset import EncodedDataset
from ..errors import ArgumentError
from .base import Scorer, check_trainable
from .tree import TreeArrays, grow_tree

logger = logging.getLogger(__name__)

MAX_HALVINGS = 30


@dataclass(frozen=True)
class GBMParams:
    n_rounds: int = GBM_ROUNDS
    tree_depth: int = GBM_DEPTH
    shrinkage: float = GBM_SHRINKAGE
    loss: str = "logistic"

    def __post_init__(self):
        # n_rounds=0 and shrinkage=0 are allowed: both give the base-rate scorer
        if self.n_rounds < 0 or self.shrinkage < 0 or self.tree_depth < 1:
            raise ArgumentError(f"Invalid gradient boosting hyperparameters: {self}")
        if self.loss != "logistic":
            raise ArgumentError(f"Only the logistic loss is supported, got '{self.loss}'")


def log_loss(F: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss of raw scores ``F``."""
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


@dataclass(frozen=True, eq=False)
class GBMScorer(Scorer):
    """sigmoid(base + sum of step_k * tree_k(x))."""
    base_score: float
    trees: tuple[TreeArrays, ...] = ()
    steps: tuple[float, ...] = ()
    params: GBMParams = field(default_factory=GBMParams)
    losses: tuple[float, ...] = ()
    seed: int = 0
    family = "gbm"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        F = np.full(X.shape[0], self.base_score)
        for tree, step in zip(self.trees, self.steps):
            if step:
                F += step * tree.predict(X)
        return F

    def score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params.__dict__.copy(),
            "base_score": self.base_score,
            "trees": [t.to_dict() for t in self.trees],
            "steps": list(self.steps),
            "training": {"losses": list(self.losses), "seed": self.seed},
        }


def train_gbm(ds: EncodedDataset, params: GBMParams = GBMParams(), seed: int = 0) -> GBMScorer:
    """Boost depth-limited regression trees on the logistic-loss gradients.

    Each round fits a tree to the residuals ``y - p`` with Newton leaf values
    ``sum(r) / sum(p(1-p))``. The shrinkage step is halved until the training
    loss does not increase (and set to 0 if that never happens), so the
    recorded per-round losses are non-increasing. No subsampling is done;
    ``seed`` is recorded for lineage only.
    """
    check_trainable(ds, "gradient boosting training set")
    y = ds.y.astype(float)
    base_rate = y.mean()
    base_score = float(np.log(base_rate / (1.0 - base_rate)))

    F = np.full(ds.n, base_score)
    loss = log_loss(F, y)
    losses = [loss]
    trees, steps = [], []
    if params.n_rounds == 0 or params.shrinkage == 0:
        return GBMScorer(base_score=base_score, params=params, losses=tuple(losses), seed=seed)

    orders = np.argsort(ds.X, axis=0, kind="stable")
    for _ in range(params.n_rounds):
        p = expit(F)
        residual = y - p
        hessian = p * (1.0 - p)
        tree = grow_tree(
            ds.X,
            residual,
            max_depth=params.tree_depth,
            min_samples_leaf=1,
            leaf_value=lambda rows: float(residual[rows].sum() / max(hessian[rows].sum(), 1e-12)),
            orders=orders,
        )
        update = tree.predict(ds.X)

        step = params.shrinkage
        for _ in range(MAX_HALVINGS):
            new_loss = log_loss(F + step * update, y)
            if new_loss <= loss:
                break
            step *= 0.5
        else:
            step = 0.0
            new_loss = loss

        if step:
            F = F + step * update
        loss = new_loss
        trees.append(tree)
        steps.append(step)
        losses.append(loss)

    logger.debug("Gradient boosting: %d rounds, final loss %.6f", len(trees), loss)
    return GBMScorer(
        base_score=base_score,
        trees=tuple(trees),
        steps=tuple(steps),
        params=params,
        losses=tuple(losses),
        seed=seed,
    )
