"""Confidence intervals and tests for disparate impact and rate ratios.

Every index handled here is a ratio ``(p0 / q0) / (p1 / q1)`` of joint
frequencies where event A_s is contained in event B_s and the groups S=0 and
S=1 are disjoint:

    DI (data)        A_s = {Y=1, S=s}        B_s = {S=s}
    DI (classifier)  A_s = {g=1, S=s}        B_s = {S=s}
    TP ratio         A_s = {g=1, Y=1, S=s}   B_s = {Y=1, S=s}
    TN ratio         A_s = {g=0, Y=0, S=s}   B_s = {Y=0, S=s}

The Delta method then gives sqrt(n) (T_n - T) -> N(0, sigma^2) with
sigma^2 = grad^T Sigma grad, Sigma the covariance of the indicator vector
(1{A_0}, 1{A_1}, 1{B_0}, 1{B_1}) evaluated at the plug-in frequencies.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .config import (
    BOOTSTRAP_MAX_UNDEFINED,
    BOOTSTRAP_MIN_REPLICATES,
    BOOTSTRAP_REPLICATES,
    CONFIDENCE_LEVEL,
    SIGNIFICANCE,
)
from .errors import ArgumentError, BootstrapInstabilityError, DegenerateVarianceError
from .metrics import CLASSIFIER, DATA, TN, TP, GroupedCounts, count_groups, disparate_impact, rate_ratio

logger = logging.getLogger(__name__)

DI = "DI"
STATISTICS = (DI, TP, TN)

FAIRNESS = "fairness"  # H1: DI > beta
DISCRIMINATION = "discrimination"  # H1: DI < beta
DIRECTIONS = (FAIRNESS, DISCRIMINATION)


@dataclass(frozen=True)
class CIEstimate:
    """Point estimate with its asymptotic sigma and a two-sided interval."""
    point: float
    sigma: float
    n: int
    level: float
    lower: float
    upper: float
    method: str = "delta"
    n_dropped: int = 0

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "sigma": self.sigma,
            "n": self.n,
            "level": self.level,
            "lower": self.lower,
            "upper": self.upper,
            "method": self.method,
            "n_dropped": self.n_dropped,
        }


@dataclass(frozen=True)
class TestResult:
    """One-sided test of DI against a level beta."""
    statistic: float
    beta: float
    alpha: float
    reject: bool
    p_value: float
    direction: str
    point: float
    sigma: float
    n: int

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "beta": self.beta,
            "alpha": self.alpha,
            "reject": self.reject,
            "p_value": self.p_value,
            "direction": self.direction,
            "point": self.point,
            "sigma": self.sigma,
            "n": self.n,
        }


def _check_level(level: float, name: str = "level") -> None:
    if not 0.0 < level < 1.0:
        raise ArgumentError(f"{name} must be in (0, 1), got {level}")


def normal_quantile(level: float) -> float:
    """z_{1-alpha/2} for a two-sided interval at confidence ``level``."""
    _check_level(level)
    return float(norm.ppf(1.0 - (1.0 - level) / 2.0))


def _event_counts(counts: GroupedCounts, target: str) -> tuple[int, int, int, int]:
    """Counts of A_0, A_1, B_0, B_1 for an index (see module docstring)."""
    if target == DATA:
        return counts.n[1][0], counts.n[1][1], counts.group_size(0), counts.group_size(1)
    m = counts.cells()
    if target == CLASSIFIER:
        return (
            counts.predicted_positive(0),
            counts.predicted_positive(1),
            counts.group_size(0),
            counts.group_size(1),
        )
    if target == TP:
        return int(m[1][1][0]), int(m[1][1][1]), counts.n[1][0], counts.n[1][1]
    if target == TN:
        return int(m[0][0][0]), int(m[0][0][1]), counts.n[0][0], counts.n[0][1]
    raise ArgumentError(f"Unknown index '{target}', expected one of {(DATA, CLASSIFIER, TP, TN)}")


def _point(counts: GroupedCounts, target: str) -> float:
    if target in (DATA, CLASSIFIER):
        return disparate_impact(counts, target).value
    return rate_ratio(counts, target).value


def ratio_gradient(p0: float, p1: float, q0: float, q1: float) -> np.ndarray:
    """Gradient of phi(p0, p1, q0, q1) = p0 q1 / (p1 q0)."""
    return np.array([
        q1 / (p1 * q0),
        -p0 * q1 / (p1 ** 2 * q0),
        -p0 * q1 / (p1 * q0 ** 2),
        p0 / (p1 * q0),
    ])


def nested_covariance(p0: float, p1: float, q0: float, q1: float) -> np.ndarray:
    """Covariance of (1{A_0}, 1{A_1}, 1{B_0}, 1{B_1}) with A_s in B_s and B_0, B_1 disjoint."""
    return np.array([
        [p0 * (1 - p0), -p0 * p1, p0 * (1 - q0), -p0 * q1],
        [-p0 * p1, p1 * (1 - p1), -p1 * q0, p1 * (1 - q1)],
        [p0 * (1 - q0), -p1 * q0, q0 * (1 - q0), -q0 * q1],
        [-p0 * q1, p1 * (1 - q1), -q0 * q1, q1 * (1 - q1)],
    ])


def _sigma(counts: GroupedCounts, target: str) -> float:
    a0, a1, b0, b1 = _event_counts(counts, target)
    n = counts.n_total
    p0, p1, q0, q1 = a0 / n, a1 / n, b0 / n, b1 / n
    if min(p0, p1, q0, q1) <= 0.0:
        raise DegenerateVarianceError(
            f"Plug-in probability is zero for {target} (A0={a0}, A1={a1}, B0={b0}, B1={b1})"
        )
    grad = ratio_gradient(p0, p1, q0, q1)
    cov = nested_covariance(p0, p1, q0, q1)
    variance = float(grad @ cov @ grad)
    # zero up to cancellation, e.g. A_s == B_s for both groups
    if variance <= 1e-12 * float(np.abs(grad) @ np.abs(cov) @ np.abs(grad)):
        raise DegenerateVarianceError(f"Asymptotic variance of {target} is zero")
    return math.sqrt(variance)


def di_sigma(counts: GroupedCounts, target: str = DATA) -> float:
    """Asymptotic standard deviation of the DI estimator (data or classifier)."""
    if target not in (DATA, CLASSIFIER):
        raise ArgumentError(f"target must be '{DATA}' or '{CLASSIFIER}', got '{target}'")
    _point(counts, target)
    return _sigma(counts, target)


def rate_ratio_sigma(counts: GroupedCounts, which: str) -> float:
    """Asymptotic standard deviation of the TP or TN rate ratio estimator."""
    if which not in (TP, TN):
        raise ArgumentError(f"which must be '{TP}' or '{TN}', got '{which}'")
    _point(counts, which)
    return _sigma(counts, which)


def _interval(counts: GroupedCounts, target: str, level: float) -> CIEstimate:
    _check_level(level)
    point = _point(counts, target)
    sigma = _sigma(counts, target)
    n = counts.n_total
    half = sigma / math.sqrt(n) * normal_quantile(level)
    return CIEstimate(point=point, sigma=sigma, n=n, level=level, lower=point - half, upper=point + half)


def di_confidence_interval(
    counts: GroupedCounts, level: float = CONFIDENCE_LEVEL, target: str = DATA
) -> CIEstimate:
    """T_n +/- (sigma / sqrt(n)) z_{1-alpha/2} for the data or classifier DI."""
    if target not in (DATA, CLASSIFIER):
        raise ArgumentError(f"target must be '{DATA}' or '{CLASSIFIER}', got '{target}'")
    return _interval(counts, target, level)


def rate_ratio_confidence_interval(
    counts: GroupedCounts, which: str, level: float = CONFIDENCE_LEVEL
) -> CIEstimate:
    """Delta-method interval for TPR(S=0)/TPR(S=1) or TNR(S=0)/TNR(S=1)."""
    if which not in (TP, TN):
        raise ArgumentError(f"which must be '{TP}' or '{TN}', got '{which}'")
    return _interval(counts, which, level)


def di_level_test(
    counts: GroupedCounts,
    beta: float,
    alpha: float = SIGNIFICANCE,
    direction: str = FAIRNESS,
    target: str = DATA,
) -> TestResult:
    """Test whether DI is above (fairness) or below (discrimination) the level ``beta``.

    The statistic is sqrt(n) (T_n - beta) / sigma. The fairness direction
    rejects H0: DI <= beta when it is >= z_{1-alpha}; the discrimination
    direction rejects H0: DI >= beta when it is <= -z_{1-alpha}.
    """
    if beta <= 0:
        raise ArgumentError(f"beta must be positive, got {beta}")
    _check_level(alpha, "alpha")
    if direction not in DIRECTIONS:
        raise ArgumentError(f"direction must be one of {DIRECTIONS}, got '{direction}'")
    if target not in (DATA, CLASSIFIER):
        raise ArgumentError(f"target must be '{DATA}' or '{CLASSIFIER}', got '{target}'")

    point = _point(counts, target)
    sigma = _sigma(counts, target)
    n = counts.n_total
    statistic = math.sqrt(n) * (point - beta) / sigma
    critical = float(norm.ppf(1.0 - alpha))
    if direction == FAIRNESS:
        reject = statistic >= critical
        p_value = float(norm.sf(statistic))
    else:
        reject = statistic <= -critical
        p_value = float(norm.cdf(statistic))
    return TestResult(
        statistic=statistic,
        beta=beta,
        alpha=alpha,
        reject=bool(reject),
        p_value=p_value,
        direction=direction,
        point=point,
        sigma=sigma,
        n=n,
    )


def _ratio_of_rates(a0: np.ndarray, b0: np.ndarray, a1: np.ndarray, b1: np.ndarray) -> np.ndarray:
    """Vectorized (a0/b0)/(a1/b1); NaN where undefined."""
    defined = (b0 > 0) & (b1 > 0) & (a1 > 0)
    out = np.full(a0.shape, np.nan)
    out[defined] = (a0[defined] * b1[defined]) / (b0[defined] * a1[defined].astype(float))
    return out


def _replicate_statistic(cells: np.ndarray, statistic: str, has_predictions: bool) -> np.ndarray:
    """Statistic for each replicate; ``cells`` has shape (B, 2, 2, 2) indexed [g][y][s]."""
    if statistic == DI:
        if has_predictions:
            positive = cells[:, 1].sum(axis=1)  # g=1, summed over y -> (B, 2) by s
        else:
            positive = cells[:, :, 1].sum(axis=1)  # y=1, summed over g
        group = cells.sum(axis=(1, 2))
        return _ratio_of_rates(positive[:, 0], group[:, 0], positive[:, 1], group[:, 1])
    if statistic == TP:
        hit, cond = cells[:, 1, 1], cells[:, :, 1].sum(axis=1)
    else:
        hit, cond = cells[:, 0, 0], cells[:, :, 0].sum(axis=1)
    return _ratio_of_rates(hit[:, 0], cond[:, 0], hit[:, 1], cond[:, 1])


@dataclass(frozen=True)
class BootstrapReplicates:
    """Defined replicate values plus the count of dropped (undefined) ones."""
    values: np.ndarray
    n_dropped: int
    n_replicates: int
    point: float
    n: int


def bootstrap_replicates(
    y: np.ndarray,
    s: np.ndarray,
    yhat: Optional[np.ndarray] = None,
    statistic: str = DI,
    B: int = BOOTSTRAP_REPLICATES,
    seed: int = 0,
) -> BootstrapReplicates:
    """Resample rows with replacement ``B`` times and recompute the statistic.

    Only the (g, Y, S) cell of a row enters any statistic, so a resample is
    drawn as multinomial cell counts with the sample's cell frequencies.
    """
    if statistic not in STATISTICS:
        raise ArgumentError(f"statistic must be one of {STATISTICS}, got '{statistic}'")
    if statistic in (TP, TN) and yhat is None:
        raise ArgumentError(f"The {statistic} ratio needs predictions")
    if B < BOOTSTRAP_MIN_REPLICATES:
        raise ArgumentError(f"B must be at least {BOOTSTRAP_MIN_REPLICATES}, got {B}")

    has_predictions = yhat is not None
    counts = count_groups(y, s, yhat if has_predictions else np.zeros(len(y), dtype=np.int64))
    if statistic == DI:
        point = _point(counts, CLASSIFIER if has_predictions else DATA)
    else:
        point = _point(counts, statistic)

    n = counts.n_total
    probabilities = counts.cells().reshape(-1) / n
    rng = np.random.default_rng(seed)
    cells = rng.multinomial(n, probabilities, size=B).reshape(B, 2, 2, 2)
    values = _replicate_statistic(cells, statistic, has_predictions)

    defined = ~np.isnan(values)
    n_dropped = int(B - defined.sum())
    if n_dropped > BOOTSTRAP_MAX_UNDEFINED * B:
        raise BootstrapInstabilityError(n_dropped, B)
    if n_dropped:
        logger.warning("Dropped %d/%d bootstrap replicates with an undefined %s", n_dropped, B, statistic)
    return BootstrapReplicates(values=values[defined], n_dropped=n_dropped, n_replicates=B, point=point, n=n)


def percentile_interval(reps: BootstrapReplicates, level: float = CONFIDENCE_LEVEL) -> CIEstimate:
    """Percentile interval of already drawn replicates.

    ``sigma`` is sqrt(n) times the replicate standard deviation, on the same
    scale as the Delta-method sigma.
    """
    _check_level(level)
    tail = 100.0 * (1.0 - level) / 2.0
    lower, upper = np.percentile(reps.values, [tail, 100.0 - tail])
    return CIEstimate(
        point=reps.point,
        sigma=float(np.std(reps.values, ddof=1) * math.sqrt(reps.n)),
        n=reps.n,
        level=level,
        lower=float(lower),
        upper=float(upper),
        method="bootstrap",
        n_dropped=reps.n_dropped,
    )


def bootstrap_ci(
    y: np.ndarray,
    s: np.ndarray,
    yhat: Optional[np.ndarray] = None,
    statistic: str = DI,
    B: int = BOOTSTRAP_REPLICATES,
    level: float = CONFIDENCE_LEVEL,
    seed: int = 0,
) -> CIEstimate:
    """Percentile bootstrap interval."""
    _check_level(level)
    reps = bootstrap_replicates(y, s, yhat, statistic=statistic, B=B, seed=seed)
    return percentile_interval(reps, level)
