"""Baseline classifiers: logistic regression, CART tree, gradient boosting."""

from dataclasses import fields
from typing import Any, Mapping, Optional, Union

from ..dataset import EncodedDataset
from ..errors import ArgumentError
from .base import (
    Classifier,
    ConstantScorer,
    EvalMetrics,
    FunctionClassifier,
    RateSet,
    Scorer,
    ThresholdedClassifier,
    check_trainable,
    evaluate,
    evaluate_predictions,
)
from .boosting import GBMParams, GBMScorer, train_gbm
from .logistic import LRParams, LogisticScorer, train_logistic
from .tree import TreeParams, TreeScorer, train_tree

Params = Union[LRParams, TreeParams, GBMParams]

FAMILIES = {
    "logistic": LRParams,
    "tree": TreeParams,
    "gbm": GBMParams,
}

# Short names used in reports and on the command line
ALIASES = {
    "lr": "logistic",
    "dt": "tree",
    "gb": "gbm",
}

LABELS = {"logistic": "LR", "tree": "DT", "gbm": "GB"}


def resolve_family(name: str) -> str:
    key = name.lower()
    key = ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ArgumentError(
            f"Unknown model family '{name}', expected one of {sorted(FAMILIES)} or {sorted(LABELS.values())}"
        )
    return key


def params_from_dict(family: str, values: Optional[Mapping[str, Any]] = None) -> Params:
    """Hyperparameters for ``family``, defaults overridden by ``values``."""
    cls = FAMILIES[resolve_family(family)]
    values = dict(values or {})
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ArgumentError(f"Unknown {family} hyperparameters: {sorted(unknown)} (allowed: {sorted(known)})")
    return cls(**values)


def train(ds: EncodedDataset, family: str, params: Optional[Params] = None, seed: int = 0) -> Scorer:
    """Train a scorer of the given family."""
    family = resolve_family(family)
    if params is None:
        params = FAMILIES[family]()
    if not isinstance(params, FAMILIES[family]):
        raise ArgumentError(f"{type(params).__name__} does not configure a {family} model")
    if family == "logistic":
        return train_logistic(ds, params, seed=seed)
    if family == "tree":
        return train_tree(ds, params)
    return train_gbm(ds, params, seed=seed)


__all__ = [
    "ALIASES",
    "Classifier",
    "ConstantScorer",
    "EvalMetrics",
    "FAMILIES",
    "FunctionClassifier",
    "GBMParams",
    "GBMScorer",
    "LABELS",
    "LRParams",
    "LogisticScorer",
    "RateSet",
    "Scorer",
    "ThresholdedClassifier",
    "TreeParams",
    "TreeScorer",
    "check_trainable",
    "evaluate",
    "evaluate_predictions",
    "params_from_dict",
    "resolve_family",
    "train",
    "train_gbm",
    "train_logistic",
    "train_tree",
]
