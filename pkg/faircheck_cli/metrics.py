"""Contingency counts and fairness indices (disparate impact, rate ratios)."""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ArgumentError, UndefinedMetricError

DATA = "data"
CLASSIFIER = "classifier"
TP = "TP"
TN = "TN"


@dataclass(frozen=True)
class GroupedCounts:
    """Exact counts ``n[y][s]`` and, with predictions, ``m[g][y][s]``."""
    n: tuple[tuple[int, int], tuple[int, int]]
    m: Optional[tuple[tuple[tuple[int, int], tuple[int, int]], ...]] = None

    @property
    def n_total(self) -> int:
        return sum(self.n[y][s] for y in (0, 1) for s in (0, 1))

    @property
    def has_predictions(self) -> bool:
        return self.m is not None

    def group_size(self, s: int) -> int:
        return self.n[0][s] + self.n[1][s]

    def predicted_positive(self, s: int) -> int:
        """Rows with g=1 in group ``s``."""
        self._require_predictions()
        return self.m[1][0][s] + self.m[1][1][s]

    def scaled(self, c: int) -> "GroupedCounts":
        """Counts of the sample with every row replicated ``c`` times."""
        n = tuple(tuple(v * c for v in row) for row in self.n)
        m = None
        if self.m is not None:
            m = tuple(tuple(tuple(v * c for v in row) for row in block) for block in self.m)
        return GroupedCounts(n=n, m=m)

    def cells(self) -> np.ndarray:
        """Counts as an array indexed ``[g][y][s]`` (requires predictions)."""
        self._require_predictions()
        return np.array(self.m, dtype=np.int64)

    def to_dict(self) -> dict:
        out = {"n": [list(row) for row in self.n], "n_total": self.n_total}
        if self.m is not None:
            out["m"] = [[list(row) for row in block] for block in self.m]
        return out

    def _require_predictions(self) -> None:
        if self.m is None:
            raise ArgumentError("These counts carry no predictions")


def count_groups(y: np.ndarray, s: np.ndarray, yhat: Optional[np.ndarray] = None) -> GroupedCounts:
    """Count rows by (Y, S) and, if given, by (g, Y, S)."""
    y = np.asarray(y)
    s = np.asarray(s)
    if y.shape != s.shape or (yhat is not None and np.shape(yhat) != y.shape):
        raise ArgumentError("y, s and yhat must have equal lengths")
    for name, v in (("y", y), ("s", s)) + ((("yhat", np.asarray(yhat)),) if yhat is not None else ()):
        if v.size and not np.isin(v, (0, 1)).all():
            raise ArgumentError(f"{name} must contain only 0 and 1")

    y = y.astype(np.int64)
    s = s.astype(np.int64)
    flat = np.bincount(2 * y + s, minlength=4)
    n = ((int(flat[0]), int(flat[1])), (int(flat[2]), int(flat[3])))
    m = None
    if yhat is not None:
        g = np.asarray(yhat).astype(np.int64)
        cube = np.bincount(4 * g + 2 * y + s, minlength=8).reshape(2, 2, 2)
        m = tuple(tuple(tuple(int(v) for v in row) for row in block) for block in cube)
    return GroupedCounts(n=n, m=m)


@dataclass(frozen=True)
class DIValue:
    """A ratio of two group-conditional rates."""
    value: float
    numerator_rate: float
    denominator_rate: float
    source: str

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "numerator_rate": self.numerator_rate,
            "denominator_rate": self.denominator_rate,
            "source": self.source,
        }


def _rate_ratio(num0: int, den0: int, num1: int, den1: int, source: str, cells: tuple[str, str, str]) -> DIValue:
    """(num0/den0) / (num1/den1) with integer arithmetic up to one final rounding."""
    if den0 == 0:
        raise UndefinedMetricError("Ratio undefined", cells[0])
    if den1 == 0:
        raise UndefinedMetricError("Ratio undefined", cells[1])
    if num1 == 0:
        raise UndefinedMetricError("Ratio undefined, reference rate is zero", cells[2])
    rate0 = Fraction(num0, den0)
    rate1 = Fraction(num1, den1)
    return DIValue(
        value=float(rate0 / rate1),
        numerator_rate=float(rate0),
        denominator_rate=float(rate1),
        source=source,
    )


def disparate_impact(counts: GroupedCounts, source: str = DATA) -> DIValue:
    """P(Y=1|S=0) / P(Y=1|S=1), or with g in place of Y when ``source`` is classifier.

    Data DI is ``[n10/(n00+n10)] / [n11/(n01+n11)]``.
    """
    if source == DATA:
        return _rate_ratio(
            counts.n[1][0], counts.group_size(0),
            counts.n[1][1], counts.group_size(1),
            source,
            ("S=0", "S=1", "Y=1,S=1"),
        )
    if source == CLASSIFIER:
        return _rate_ratio(
            counts.predicted_positive(0), counts.group_size(0),
            counts.predicted_positive(1), counts.group_size(1),
            source,
            ("S=0", "S=1", "g=1,S=1"),
        )
    raise ArgumentError(f"source must be '{DATA}' or '{CLASSIFIER}', got '{source}'")


def disparate_impact_of_classifier(clf, ds) -> DIValue:
    """DI of a classifier's decisions on a dataset."""
    counts = count_groups(ds.y, ds.s, clf.predict(ds.X, ds.s))
    return disparate_impact(counts, CLASSIFIER)


def rate_ratio(counts: GroupedCounts, which: str) -> DIValue:
    """TP: P(g=1|Y=1,S=0)/P(g=1|Y=1,S=1); TN: P(g=0|Y=0,S=0)/P(g=0|Y=0,S=1)."""
    m = counts.cells()
    if which == TP:
        return _rate_ratio(
            int(m[1][1][0]), counts.n[1][0],
            int(m[1][1][1]), counts.n[1][1],
            CLASSIFIER,
            ("Y=1,S=0", "Y=1,S=1", "g=1,Y=1,S=1"),
        )
    if which == TN:
        return _rate_ratio(
            int(m[0][0][0]), counts.n[0][0],
            int(m[0][0][1]), counts.n[0][1],
            CLASSIFIER,
            ("Y=0,S=0", "Y=0,S=1", "g=0,Y=0,S=1"),
        )
    raise ArgumentError(f"which must be '{TP}' or '{TN}', got '{which}'")
