"""L2-regularized logistic regression, full-batch Newton or gradient descent."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..config import LR_L2_PENALTY, LR_LEARNING_RATE, LR_MAX_EPOCHS, LR_TOLERANCE
from ..dataset import EncodedDataset
from ..errors import ArgumentError
from .base import Scorer, check_trainable

logger = logging.getLogger(__name__)

METHODS = ("newton", "gradient")


@dataclass(frozen=True)
class LRParams:
    l2_penalty: float = LR_L2_PENALTY
    max_epochs: int = LR_MAX_EPOCHS
    learning_rate: float = LR_LEARNING_RATE  # initial step of the backtracking line search
    tolerance: float = LR_TOLERANCE
    method: str = "newton"

    def __post_init__(self):
        if self.l2_penalty <= 0 or self.max_epochs < 1 or self.learning_rate <= 0 or self.tolerance <= 0:
            raise ArgumentError(f"Logistic regression hyperparameters must be positive: {self}")
        if self.method not in METHODS:
            raise ArgumentError(f"method must be one of {METHODS}, got '{self.method}'")


def loss_and_gradient(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean log-loss plus (l2/2)*||w||^2 and its gradient.

    ``theta[0]`` is the unpenalized intercept and ``Z[:, 0]`` a column of ones.
    """
    z = Z @ theta
    w = theta[1:]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    grad = Z.T @ (expit(z) - y) / len(y)
    grad[1:] += l2 * w
    return loss, grad


def _hessian(theta: np.ndarray, Z: np.ndarray, l2: float) -> np.ndarray:
    p = expit(Z @ theta)
    H = (Z * (p * (1.0 - p))[:, None]).T @ Z / Z.shape[0]
    H[np.arange(1, len(theta)), np.arange(1, len(theta))] += l2
    return H


@dataclass(frozen=True, eq=False)
class LogisticScorer(Scorer):
    """sigmoid(b + w . standardized(x))."""
    intercept: float
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    params: LRParams = field(default_factory=LRParams)
    losses: tuple[float, ...] = ()
    seed: int = 0
    family = "logistic"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + ((X - self.center) / self.scale) @ self.coef

    def score(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params.__dict__.copy(),
            "intercept": self.intercept,
            "coef": self.coef.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "training": {"losses": list(self.losses), "seed": self.seed},
        }


def standardization(ds: EncodedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Z-score statistics of continuous columns; identity for encoded categoricals."""
    center = np.zeros(ds.d)
    scale = np.ones(ds.d)
    if ds.n and ds.continuous_mask.any():
        cols = ds.X[:, ds.continuous_mask]
        std = cols.std(axis=0)
        center[ds.continuous_mask] = cols.mean(axis=0)
        scale[ds.continuous_mask] = np.where(std > 0, std, 1.0)
    return center, scale


def train_logistic(ds: EncodedDataset, params: LRParams = LRParams(), seed: int = 0) -> LogisticScorer:
    """Minimize the regularized logistic loss; records the loss at every epoch.

    Steps are backtracked until the Armijo condition holds, so recorded losses
    never increase. Training is deterministic; ``seed`` is kept as lineage.
    """
    check_trainable(ds, "logistic regression training set")
    center, scale = standardization(ds)
    Z = np.hstack([np.ones((ds.n, 1)), (ds.X - center) / scale])
    y = ds.y.astype(float)

    theta = np.zeros(Z.shape[1])
    base_rate = y.mean()
    theta[0] = np.log(base_rate / (1.0 - base_rate))

    loss, grad = loss_and_gradient(theta, Z, y, params.l2_penalty)
    losses = [loss]
    for epoch in range(params.max_epochs):
        if params.method == "newton":
            H = _hessian(theta, Z, params.l2_penalty)
            try:
                direction = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                direction = -np.linalg.lstsq(H, grad, rcond=None)[0]
        else:
            direction = -grad

        slope = float(grad @ direction)
        if slope >= 0:
            break
        step = params.learning_rate
        for _ in range(60):
            candidate = theta + step * direction
            new_loss, new_grad = loss_and_gradient(candidate, Z, y, params.l2_penalty)
            if new_loss <= loss + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break

        improvement = loss - new_loss
        theta, loss, grad = candidate, new_loss, new_grad
        losses.append(loss)
        if improvement <= params.tolerance * (1.0 + abs(loss)) or np.max(np.abs(grad)) <= params.tolerance:
            break

    logger.debug("Logistic regression: %d epochs, final loss %.6f", len(losses) - 1, loss)
    return LogisticScorer(
        intercept=float(theta[0]),
        coef=theta[1:].copy(),
        center=center,
        scale=scale,
        params=params,
        losses=tuple(losses),
        seed=seed,
    )
