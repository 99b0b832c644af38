"""Bias mitigation strategies as classifier wrappers.

Four strategies are available on top of a plain thresholded scorer:

- drop-sensitive: train without the columns encoding S
- testing-compliant: answer the most favourable of the predictions for both S values
- separate: one model per S group, rows routed by their group
- positive-discrimination: a lower threshold for S=0, calibrated to a target DI
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from . import models
from .config import DEFAULT_THRESHOLD, TARGET_DI
from .dataset import EncodedDataset
from .errors import ArgumentError, ConfigError, DegenerateTrainingError, UndefinedMetricError
from .metrics import CLASSIFIER, DIValue, disparate_impact
from .models import EvalMetrics, Scorer, ThresholdedClassifier, evaluate
from .models.serialize import load_document, save_document, scorer_from_dict, unwrap, wrap

logger = logging.getLogger(__name__)

# Strategy names used by experiments and the CLI
NONE = "none"
DROP_SENSITIVE = "drop-sensitive"
TESTING_COMPLIANT = "testing-compliant"
SEPARATE = "separate"
POSITIVE_DISCRIMINATION = "positive-discrimination"
STRATEGIES = (NONE, DROP_SENSITIVE, TESTING_COMPLIANT, SEPARATE, POSITIVE_DISCRIMINATION)


@dataclass(frozen=True)
class GroupThresholds:
    """Decision thresholds per S group; ``reached`` is False when calibration missed the target."""
    t0: float = DEFAULT_THRESHOLD
    t1: float = DEFAULT_THRESHOLD
    target_di: float = TARGET_DI
    reached: bool = True

    def __post_init__(self):
        if not (0.0 <= self.t0 <= 1.0 and 0.0 <= self.t1 <= 1.0):
            raise ArgumentError(f"Thresholds must be in [0, 1], got t0={self.t0}, t1={self.t1}")

    def apply(self, scores: np.ndarray, s: np.ndarray) -> np.ndarray:
        return (scores >= np.where(np.asarray(s) == 0, self.t0, self.t1)).astype(np.int64)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "t1": self.t1, "target_di": self.target_di, "reached": self.reached}


# ============ Composite classifiers ============

@dataclass(frozen=True)
class DroppedSensitiveClassifier:
    """Classifier trained without the S columns; removes them before predicting."""
    base: ThresholdedClassifier
    dropped: tuple[int, ...]
    variant = "dropped-sensitive"

    def predict(self, X: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.base.predict(np.delete(X, self.dropped, axis=1), s)


@dataclass(frozen=True)
class TestingCompliantClassifier:
    """max(f(x, s), f(x', 1-s)) where x' has its S encoding flipped."""
    base: ThresholdedClassifier
    s_indices: tuple[int, ...]
    variant = "testing-compliant"

    __test__ = False  # not a pytest class

    def predict(self, X: np.ndarray, s: np.ndarray) -> np.ndarray:
        as_is = self.base.predict(X, s)
        flipped = self.base.predict(flip_sensitive(X, self.s_indices), 1 - np.asarray(s))
        return np.maximum(as_is, flipped)


@dataclass(frozen=True)
class SeparateClassifier:
    """One scorer per S group."""
    scorers: tuple[Scorer, Scorer]
    thresholds: GroupThresholds = field(default_factory=GroupThresholds)
    variant = "separate-treatment"

    def predict(self, X: np.ndarray, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s)
        scores = np.empty(X.shape[0])
        for group in (0, 1):
            rows = s == group
            if rows.any():
                scores[rows] = self.scorers[group].score(X[rows])
        return self.thresholds.apply(scores, s)


@dataclass(frozen=True)
class GroupThresholdClassifier:
    """Single scorer with S-dependent thresholds."""
    scorer: Scorer
    thresholds: GroupThresholds
    variant = "positive-discrimination"

    def predict(self, X: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.thresholds.apply(self.scorer.score(X), s)


AnyClassifier = Union[
    ThresholdedClassifier,
    DroppedSensitiveClassifier,
    TestingCompliantClassifier,
    SeparateClassifier,
    GroupThresholdClassifier,
]


# ============ Strategies ============

def flip_sensitive(X: np.ndarray, s_indices: Sequence[int]) -> np.ndarray:
    """Copy of ``X`` with the S encoding flipped: ``1 - x`` for a single 0/1 column, swapped for a pair."""
    idx = list(s_indices)
    out = np.array(X, dtype=float, copy=True)
    if len(idx) == 1:
        out[:, idx[0]] = 1.0 - out[:, idx[0]]
    elif len(idx) == 2:
        out[:, idx] = out[:, idx[::-1]]
    else:
        raise ArgumentError(f"Cannot flip an S encoding spread over {len(idx)} columns")
    return out


def drop_sensitive(ds: EncodedDataset) -> EncodedDataset:
    """Remove the columns encoding S from X; ``s`` stays for auditing."""
    if not ds.sensitive_feature_indices:
        logger.warning("Sensitive columns already removed; dataset unchanged")
        return ds
    return ds.without_features(ds.sensitive_feature_indices)


def make_testing_compliant(clf: ThresholdedClassifier, s_indices: Sequence[int]) -> TestingCompliantClassifier:
    """Wrap a classifier trained with S so that flipping S never changes its decision."""
    if not s_indices:
        raise ArgumentError("The classifier has no S columns to make testing compliant")
    return TestingCompliantClassifier(base=clf, s_indices=tuple(s_indices))


def testing_audit(clf, ds: EncodedDataset) -> float:
    """Fraction of rows whose decision changes when only S is flipped."""
    if not ds.sensitive_feature_indices:
        raise ArgumentError("Testing audit needs S among the features")
    original = clf.predict(ds.X, ds.s)
    flipped = clf.predict(flip_sensitive(ds.X, ds.sensitive_feature_indices), 1 - ds.s)
    return float(np.mean(original != flipped)) if ds.n else 0.0


def train_separate(
    ds: EncodedDataset,
    family: str,
    params: Optional[models.Params] = None,
    seed: int = 0,
) -> SeparateClassifier:
    """Train the same model family independently on each S group."""
    scorers = []
    for group in (0, 1):
        part = ds.subset(ds.group_rows(group))
        try:
            scorers.append(models.train(part, family, params, seed=seed))
        except DegenerateTrainingError as e:
            raise DegenerateTrainingError(f"group S={group}: {e}") from e
    return SeparateClassifier(scorers=(scorers[0], scorers[1]))


def _positive_counts(scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Number of scores >= each threshold."""
    ordered = np.sort(scores)
    return len(ordered) - np.searchsorted(ordered, thresholds, side="left")


def calibrate_thresholds(
    scorer: Scorer,
    ds: EncodedDataset,
    target_di: float = TARGET_DI,
    t1: float = DEFAULT_THRESHOLD,
) -> GroupThresholds:
    """Lower the S=0 threshold until the classifier DI on ``ds`` reaches ``target_di``.

    Thresholds are left at (t1, t1) when DI already reaches the target. Otherwise
    t0 is the largest candidate (midpoints between consecutive distinct S=0
    scores, plus 0 and 1) with DI >= target_di. If no candidate reaches the
    target, the DI-maximizing one is returned with ``reached=False``.
    """
    if target_di <= 0:
        raise ArgumentError(f"target_di must be positive, got {target_di}")
    scores = scorer.score(ds.X)
    scores0 = scores[ds.s == 0]
    scores1 = scores[ds.s == 1]
    if not len(scores0):
        raise UndefinedMetricError("Cannot calibrate thresholds", "S=0")
    if not len(scores1):
        raise UndefinedMetricError("Cannot calibrate thresholds", "S=1")
    positive1 = int(np.sum(scores1 >= t1))
    if positive1 == 0:
        raise UndefinedMetricError("Cannot calibrate thresholds", "g=1,S=1")
    n0, n1 = len(scores0), len(scores1)

    def di_at(t0: np.ndarray) -> np.ndarray:
        return _positive_counts(scores0, t0) * n1 / (n0 * positive1)

    if di_at(np.array([t1]))[0] >= target_di:
        return GroupThresholds(t0=t1, t1=t1, target_di=target_di)

    unique = np.unique(scores0)
    candidates = np.unique(np.concatenate([[0.0, 1.0], (unique[:-1] + unique[1:]) / 2.0]))
    values = di_at(candidates)
    reaching = np.flatnonzero(values >= target_di)
    if len(reaching):
        return GroupThresholds(t0=float(candidates[reaching[-1]]), t1=t1, target_di=target_di)

    best = np.flatnonzero(values == values.max())[-1]
    logger.warning(
        "Target DI %.4f not reachable; best t0=%.6f gives DI %.4f",
        target_di, candidates[best], values[best],
    )
    return GroupThresholds(t0=float(candidates[best]), t1=t1, target_di=target_di, reached=False)


@dataclass(frozen=True)
class PositiveDiscriminationReport:
    """Evaluation of a group-threshold classifier next to its (0.5, 0.5) baseline."""
    thresholds: GroupThresholds
    evaluation: EvalMetrics
    di: DIValue
    baseline: EvalMetrics
    baseline_di: Optional[DIValue]

    def false_positive_rate_delta(self, group: int) -> Optional[float]:
        new = self.evaluation.by_group(group).false_positive_rate
        old = self.baseline.by_group(group).false_positive_rate
        return None if new is None or old is None else new - old

    def false_positive_count_delta(self, group: int) -> int:
        return self.evaluation.by_group(group).false_positives - self.baseline.by_group(group).false_positives

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.to_dict(),
            "evaluation": self.evaluation.to_dict(),
            "di": self.di.to_dict(),
            "baseline": self.baseline.to_dict(),
            "baseline_di": self.baseline_di.to_dict() if self.baseline_di else None,
            "false_positive_rate_delta": {str(g): self.false_positive_rate_delta(g) for g in (0, 1)},
            "false_positive_count_delta": {str(g): self.false_positive_count_delta(g) for g in (0, 1)},
        }


def positive_discrimination_report(clf: GroupThresholdClassifier, ds: EncodedDataset) -> PositiveDiscriminationReport:
    """Evaluation, DI and per-group false-positive changes against the uncalibrated classifier."""
    evaluation = evaluate(clf, ds)
    baseline = evaluate(ThresholdedClassifier(clf.scorer, DEFAULT_THRESHOLD), ds)
    try:
        baseline_di = disparate_impact(baseline.counts, CLASSIFIER)
    except UndefinedMetricError:
        baseline_di = None
    return PositiveDiscriminationReport(
        thresholds=clf.thresholds,
        evaluation=evaluation,
        di=disparate_impact(evaluation.counts, CLASSIFIER),
        baseline=baseline,
        baseline_di=baseline_di,
    )


@dataclass(frozen=True)
class FittedStrategy:
    """Classifier produced by a strategy, with its calibration details if any."""
    strategy: str
    classifier: Any
    thresholds: Optional[GroupThresholds] = None


def fit_strategy(
    strategy: str,
    ds: EncodedDataset,
    family: str,
    params: Optional[models.Params] = None,
    seed: int = 0,
    target_di: float = TARGET_DI,
) -> FittedStrategy:
    """Train ``family`` on ``ds`` and apply ``strategy``; touches only ``ds`` rows."""
    if strategy == NONE:
        return FittedStrategy(strategy, ThresholdedClassifier(models.train(ds, family, params, seed=seed)))
    if strategy == DROP_SENSITIVE:
        scorer = models.train(drop_sensitive(ds), family, params, seed=seed)
        return FittedStrategy(
            strategy,
            DroppedSensitiveClassifier(ThresholdedClassifier(scorer), tuple(ds.sensitive_feature_indices)),
        )
    if strategy == TESTING_COMPLIANT:
        if not ds.sensitive_feature_indices:
            raise ArgumentError("testing-compliant needs S among the training features")
        base = ThresholdedClassifier(models.train(ds, family, params, seed=seed))
        return FittedStrategy(strategy, make_testing_compliant(base, ds.sensitive_feature_indices))
    if strategy == SEPARATE:
        return FittedStrategy(strategy, train_separate(ds, family, params, seed=seed))
    if strategy == POSITIVE_DISCRIMINATION:
        scorer = models.train(ds, family, params, seed=seed)
        thresholds = calibrate_thresholds(scorer, ds, target_di)
        return FittedStrategy(strategy, GroupThresholdClassifier(scorer, thresholds), thresholds)
    raise ArgumentError(f"Unknown strategy '{strategy}', expected one of {STRATEGIES}")


# ============ Serialization ============

def classifier_to_dict(clf: AnyClassifier) -> dict:
    """JSON-ready description of any classifier built by this module."""
    if isinstance(clf, ThresholdedClassifier):
        return {"variant": "thresholded", "threshold": clf.threshold, "scorer": clf.scorer.to_dict()}
    if isinstance(clf, (DroppedSensitiveClassifier, TestingCompliantClassifier)):
        indices = clf.dropped if isinstance(clf, DroppedSensitiveClassifier) else clf.s_indices
        return {"variant": clf.variant, "indices": list(indices), "base": classifier_to_dict(clf.base)}
    if isinstance(clf, SeparateClassifier):
        return {
            "variant": clf.variant,
            "thresholds": clf.thresholds.to_dict(),
            "scorers": [sc.to_dict() for sc in clf.scorers],
        }
    if isinstance(clf, GroupThresholdClassifier):
        return {"variant": clf.variant, "thresholds": clf.thresholds.to_dict(), "scorer": clf.scorer.to_dict()}
    raise ArgumentError(f"Cannot serialize {type(clf).__name__}")


def classifier_from_dict(doc: Mapping[str, Any]) -> AnyClassifier:
    variant = doc.get("variant")
    try:
        if variant == "thresholded":
            return ThresholdedClassifier(scorer_from_dict(doc["scorer"]), float(doc["threshold"]))
        if variant == DroppedSensitiveClassifier.variant:
            return DroppedSensitiveClassifier(classifier_from_dict(doc["base"]), tuple(doc["indices"]))
        if variant == TestingCompliantClassifier.variant:
            return TestingCompliantClassifier(classifier_from_dict(doc["base"]), tuple(doc["indices"]))
        if variant == SeparateClassifier.variant:
            s0, s1 = (scorer_from_dict(d) for d in doc["scorers"])
            return SeparateClassifier((s0, s1), GroupThresholds(**doc["thresholds"]))
        if variant == GroupThresholdClassifier.variant:
            return GroupThresholdClassifier(scorer_from_dict(doc["scorer"]), GroupThresholds(**doc["thresholds"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed '{variant}' classifier document: {e}") from e
    raise ConfigError(f"Unknown classifier variant '{variant}'")


def save_classifier(clf: AnyClassifier, path: Path) -> None:
    save_document(wrap(classifier_to_dict(clf), "classifier"), path)


def load_classifier(path: Path) -> AnyClassifier:
    """Load a saved classifier; a bare scorer document is thresholded at 0.5."""
    kind, body = unwrap(load_document(path))
    if kind == "scorer":
        return ThresholdedClassifier(scorer_from_dict(body))
    return classifier_from_dict(body)
