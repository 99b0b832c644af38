"""Scorer contract, thresholded classifiers and evaluation."""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from ..config import DEFAULT_THRESHOLD
from ..dataset import EncodedDataset
from ..errors import ArgumentError, DegenerateTrainingError
from ..metrics import GroupedCounts, count_groups


class Scorer(ABC):
    """Trained model estimating eta(x) = P(Y=1 | X=x) with values in [0, 1]."""

    family: str = ""

    @abstractmethod
    def score(self, X: np.ndarray) -> np.ndarray:
        """Scores for each row of ``X``."""

    @abstractmethod
    def to_dict(self) -> dict:
        """JSON-ready description (family, hyperparameters, fitted arrays)."""

    def descriptor(self) -> dict:
        doc = self.to_dict()
        return {"family": self.family, "params": doc.get("params", {}), "training": doc.get("training", {})}


class Classifier(Protocol):
    """Anything producing binary decisions for rows ``X`` with groups ``s``."""

    def predict(self, X: np.ndarray, s: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True)
class ConstantScorer(Scorer):
    """Scorer returning the same value for every row."""
    value: float
    family = "constant"

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], self.value)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {}, "value": self.value}


@dataclass(frozen=True)
class ThresholdedClassifier:
    """g(x) = 1 iff score(x) >= threshold."""
    scorer: Scorer
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ArgumentError(f"threshold must be in [0, 1], got {self.threshold}")

    def predict(self, X: np.ndarray, s: Optional[np.ndarray] = None) -> np.ndarray:
        return (self.scorer.score(X) >= self.threshold).astype(np.int64)


@dataclass(frozen=True)
class FunctionClassifier:
    """Wraps a plain function ``f(X, s) -> {0,1}`` as a classifier (oracles and fixtures)."""
    fn: object

    def predict(self, X: np.ndarray, s: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(X, s), dtype=np.int64)


@dataclass(frozen=True)
class RateSet:
    """Accuracy, TPR, TNR and false-positive figures for one slice of rows.

    Rates are ``None`` when their conditioning cell is empty.
    """
    n: int
    accuracy: Optional[float]
    true_positive_rate: Optional[float]
    true_negative_rate: Optional[float]
    false_positive_rate: Optional[float]
    false_positives: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "true_positive_rate": self.true_positive_rate,
            "true_negative_rate": self.true_negative_rate,
            "false_positive_rate": self.false_positive_rate,
            "false_positives": self.false_positives,
        }


@dataclass(frozen=True)
class EvalMetrics:
    """Overall and per-group (S=0, S=1) evaluation of a classifier."""
    overall: RateSet
    group0: RateSet
    group1: RateSet
    counts: GroupedCounts

    def by_group(self, group: int) -> RateSet:
        return self.group0 if group == 0 else self.group1

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "group0": self.group0.to_dict(),
            "group1": self.group1.to_dict(),
        }


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def _rates(m: np.ndarray) -> RateSet:
    """Rates from a 2x2 table ``m[g][y]``."""
    tp, fn = int(m[1][1]), int(m[0][1])
    tn, fp = int(m[0][0]), int(m[1][0])
    n = tp + fn + tn + fp
    return RateSet(
        n=n,
        accuracy=_ratio(tp + tn, n),
        true_positive_rate=_ratio(tp, tp + fn),
        true_negative_rate=_ratio(tn, tn + fp),
        false_positive_rate=_ratio(fp, tn + fp),
        false_positives=fp,
    )


def evaluate_predictions(yhat: np.ndarray, ds: EncodedDataset) -> EvalMetrics:
    """Evaluate precomputed decisions against ``ds.y``."""
    if ds.n == 0:
        raise ArgumentError("Cannot evaluate on an empty dataset")
    counts = count_groups(ds.y, ds.s, yhat)
    m = np.array(counts.m)  # m[g][y][s]
    return EvalMetrics(
        overall=_rates(m.sum(axis=2)),
        group0=_rates(m[:, :, 0]),
        group1=_rates(m[:, :, 1]),
        counts=counts,
    )


def evaluate(clf: Classifier, ds: EncodedDataset) -> EvalMetrics:
    """Accuracy, TPR = P(g=1|Y=1) and TNR = P(g=0|Y=0), overall and per S group."""
    return evaluate_predictions(clf.predict(ds.X, ds.s), ds)


def check_trainable(ds: EncodedDataset, what: str = "dataset") -> None:
    """Raise DegenerateTrainingError unless both classes are present."""
    if ds.n < 2:
        raise DegenerateTrainingError(f"{what} has {ds.n} rows, need at least 2")
    if ds.y.min() == ds.y.max():
        raise DegenerateTrainingError(f"{what} has a single class (y={int(ds.y[0])})")
