"""Cross-validated experiments over model family x strategy x sensitive attribute."""

import json
import logging
import tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from . import mitigation, models, recipes
from .config import CONFIDENCE_LEVEL, N_FOLDS, TARGET_DI
from .dataset import EncodedDataset, balanced_subsample, equalized_group_sizes, kfold
from .errors import ArgumentError, ConfigError, DegenerateTrainingError, FaircheckError, UndefinedMetricError
from .inference import CIEstimate, di_confidence_interval, rate_ratio_confidence_interval
from .metrics import CLASSIFIER, DATA, TN, TP, DIValue, count_groups, disparate_impact, rate_ratio
from .models import EvalMetrics, ThresholdedClassifier, evaluate, evaluate_predictions

logger = logging.getLogger(__name__)

# Stream tags for SeedSequence spawn keys
FOLD_STREAM = 0
BALANCE_STREAM = 1


def derive_seed(master: int, *key: int) -> int:
    """Seed that is a pure function of the master seed and a key path."""
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """One cross-validated (dataset, model, strategy, sensitive attribute) cell."""
    name: str
    dataset: str = "adult"
    family: str = "logistic"
    params: Mapping[str, Any] = field(default_factory=dict)
    strategy: str = mitigation.NONE
    sensitive: Optional[str] = None
    k: int = N_FOLDS
    seed: int = 0
    target_di: float = TARGET_DI
    balance: bool = False
    level: float = CONFIDENCE_LEVEL

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", models.resolve_family(self.family))
            models.params_from_dict(self.family, self.params)
        except ArgumentError as e:
            raise ConfigError(f"{e} in '{self.name}'") from e
        if self.strategy not in mitigation.STRATEGIES:
            raise ConfigError(
                f"Unknown strategy '{self.strategy}' in '{self.name}', expected one of {mitigation.STRATEGIES}"
            )
        if self.k < 2:
            raise ConfigError(f"k must be at least 2 in '{self.name}', got {self.k}")
        if not 0.0 < self.level < 1.0 or self.target_di <= 0:
            raise ConfigError(f"level must be in (0, 1) and target_di positive in '{self.name}'")

    def model_params(self) -> models.Params:
        return models.params_from_dict(self.family, self.params)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = dict(self.params)
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExperimentConfig":
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(f"Bad experiment entry {dict(raw)}: {e}") from e


@dataclass(frozen=True)
class FoldRecord:
    """Held-out metrics of one fold."""
    fold: int
    seed: int
    n_train: int
    n_test: int
    evaluation: EvalMetrics
    points: Mapping[str, Optional[float]]
    di: Optional[CIEstimate]
    ref_di: Optional[CIEstimate]
    tp_ratio: Optional[CIEstimate] = None
    tn_ratio: Optional[CIEstimate] = None
    flip_fraction: Optional[float] = None
    thresholds: Optional[mitigation.GroupThresholds] = None
    baseline: Optional[EvalMetrics] = None
    notes: tuple[str, ...] = ()

    def metrics(self) -> dict[str, Optional[float]]:
        """Flat scalar metrics, ``None`` where undefined."""
        ev = self.evaluation
        out = {
            "accuracy": ev.overall.accuracy,
            "tpr": ev.overall.true_positive_rate,
            "tnr": ev.overall.true_negative_rate,
            "tpr_s0": ev.group0.true_positive_rate,
            "tpr_s1": ev.group1.true_positive_rate,
            "tnr_s0": ev.group0.true_negative_rate,
            "tnr_s1": ev.group1.true_negative_rate,
            "fpr_s0": ev.group0.false_positive_rate,
            "fpr_s1": ev.group1.false_positive_rate,
            "di": self.points.get("di"),
            "ref_di": self.points.get("ref_di"),
            "tp_ratio": self.points.get("tp_ratio"),
            "tn_ratio": self.points.get("tn_ratio"),
            "flip_fraction": self.flip_fraction,
        }
        if self.baseline is not None:
            out["baseline_accuracy"] = self.baseline.overall.accuracy
            out["baseline_fpr_s0"] = self.baseline.group0.false_positive_rate
        if self.thresholds is not None:
            out["t0"] = self.thresholds.t0
        return out

    def intervals(self) -> dict[str, Optional[CIEstimate]]:
        return {"di": self.di, "ref_di": self.ref_di, "tp_ratio": self.tp_ratio, "tn_ratio": self.tn_ratio}

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "seed": self.seed,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "metrics": self.metrics(),
            "intervals": {k: v.to_dict() if v else None for k, v in self.intervals().items()},
            "evaluation": self.evaluation.to_dict(),
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "thresholds": self.thresholds.to_dict() if self.thresholds else None,
            "notes": list(self.notes),
        }


def aggregate(values: Sequence[Optional[float]]) -> Optional[dict]:
    """Mean and five-number summary of the defined values."""
    defined = np.array([v for v in values if v is not None], dtype=float)
    if not len(defined):
        return None
    q = np.percentile(defined, [0, 25, 50, 75, 100])
    return {
        "n": int(len(defined)),
        "mean": float(defined.mean()),
        "min": float(q[0]),
        "q1": float(q[1]),
        "median": float(q[2]),
        "q3": float(q[3]),
        "max": float(q[4]),
    }


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    n: int = 0
    d: int = 0
    folds: tuple[FoldRecord, ...] = ()
    ref_full: Optional[CIEstimate] = None
    error: Optional[str] = None
    error_code: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def series(self, metric: str) -> list[Optional[float]]:
        return [f.metrics().get(metric) for f in self.folds]

    def metric_names(self) -> list[str]:
        names: list[str] = []
        for f in self.folds:
            names.extend(k for k in f.metrics() if k not in names)
        return names

    def aggregates(self) -> dict[str, Optional[dict]]:
        return {name: aggregate(self.series(name)) for name in self.metric_names()}

    def mean(self, metric: str) -> Optional[float]:
        agg = aggregate(self.series(metric))
        return agg["mean"] if agg else None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n": self.n,
            "d": self.d,
            "error": self.error,
            "ref": {
                "full": self.ref_full.to_dict() if self.ref_full else None,
                "per_fold": self.series("ref_di"),
            },
            "folds": [f.to_dict() for f in self.folds],
            "aggregates": self.aggregates(),
        }


def _point(fn: Callable[[], DIValue]) -> Optional[float]:
    try:
        return fn().value
    except UndefinedMetricError:
        return None


def _interval(fn: Callable[[], CIEstimate], notes: list[str], what: str) -> Optional[CIEstimate]:
    try:
        return fn()
    except FaircheckError as e:
        if e.exit_code != 2:
            raise
        notes.append(f"{what}: {e}")
        return None


def _run_fold(cfg: ExperimentConfig, ds: EncodedDataset, plan, fold: int) -> FoldRecord:
    seed = derive_seed(cfg.seed, FOLD_STREAM, fold)
    train = ds.subset(plan.train_indices(fold))
    test = ds.subset(plan.test_indices(fold))
    try:
        fitted = mitigation.fit_strategy(
            cfg.strategy, train, cfg.family, cfg.model_params(), seed=seed, target_di=cfg.target_di
        )
    except DegenerateTrainingError as e:
        raise DegenerateTrainingError(f"fold {fold}: {e}") from e

    yhat = fitted.classifier.predict(test.X, test.s)
    evaluation = evaluate_predictions(yhat, test)
    counts = count_groups(test.y, test.s, yhat)
    notes: list[str] = []
    record = dict(
        fold=fold,
        seed=seed,
        n_train=train.n,
        n_test=test.n,
        evaluation=evaluation,
        points={
            "di": _point(lambda: disparate_impact(counts, CLASSIFIER)),
            "ref_di": _point(lambda: disparate_impact(counts, DATA)),
            "tp_ratio": _point(lambda: rate_ratio(counts, TP)),
            "tn_ratio": _point(lambda: rate_ratio(counts, TN)),
        },
        di=_interval(lambda: di_confidence_interval(counts, cfg.level, CLASSIFIER), notes, "di"),
        ref_di=_interval(lambda: di_confidence_interval(counts, cfg.level, DATA), notes, "ref_di"),
        tp_ratio=_interval(lambda: rate_ratio_confidence_interval(counts, TP, cfg.level), notes, "tp_ratio"),
        tn_ratio=_interval(lambda: rate_ratio_confidence_interval(counts, TN, cfg.level), notes, "tn_ratio"),
        thresholds=fitted.thresholds,
    )
    if test.sensitive_feature_indices:
        record["flip_fraction"] = mitigation.testing_audit(fitted.classifier, test)
    if cfg.strategy == mitigation.POSITIVE_DISCRIMINATION:
        record["baseline"] = evaluate(ThresholdedClassifier(fitted.classifier.scorer), test)
    logger.debug("Fold %d of '%s': accuracy %.4f", fold, cfg.name, evaluation.overall.accuracy)
    return FoldRecord(notes=tuple(notes), **record)


def prepare_dataset(cfg: ExperimentConfig, ds: EncodedDataset) -> EncodedDataset:
    """Apply the balanced subsample if requested."""
    if not cfg.balance:
        return ds
    sizes = equalized_group_sizes(ds)
    balanced = balanced_subsample(ds, sizes, derive_seed(cfg.seed, BALANCE_STREAM))
    logger.info("Balanced subsample for '%s': %d of %d rows", cfg.name, balanced.n, ds.n)
    return balanced


def run_cross_validation(
    cfg: ExperimentConfig,
    ds: Optional[EncodedDataset] = None,
    workers: int = 1,
) -> ExperimentReport:
    """k-fold cross-validation of one config; folds are reported in index order.

    ``ds`` skips loading the dataset named by the config.
    """
    if ds is None:
        ds = recipes.load_dataset(recipes.load_config(cfg.dataset), cfg.sensitive)
    ds = prepare_dataset(cfg, ds)
    plan = kfold(ds.n, cfg.k, cfg.seed)

    ref_notes: list[str] = []
    ref_full = _interval(lambda: di_confidence_interval(count_groups(ds.y, ds.s), cfg.level), ref_notes, "ref")
    for note in ref_notes:
        logger.warning("'%s': %s", cfg.name, note)

    def run(fold: int) -> FoldRecord:
        return _run_fold(cfg, ds, plan, fold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            folds = tuple(pool.map(run, range(cfg.k)))
    else:
        folds = tuple(run(fold) for fold in range(cfg.k))
    return ExperimentReport(config=cfg, n=ds.n, d=ds.d, folds=folds, ref_full=ref_full)


def run_suite(
    configs: Sequence[ExperimentConfig],
    workers: int = 1,
    on_done: Optional[Callable[[ExperimentReport], None]] = None,
) -> list[ExperimentReport]:
    """Run every config; a failing config yields a report with ``error`` set."""
    cache: dict[tuple[str, Optional[str]], EncodedDataset] = {}
    reports = []
    for cfg in configs:
        try:
            key = (cfg.dataset, cfg.sensitive)
            if key not in cache:
                cache[key] = recipes.load_dataset(recipes.load_config(cfg.dataset), cfg.sensitive)
            report = run_cross_validation(cfg, cache[key], workers=workers)
        except FaircheckError as e:
            logger.error("Experiment '%s' failed: %s", cfg.name, e)
            report = ExperimentReport(config=cfg, error=f"{type(e).__name__}: {e}", error_code=e.exit_code)
        reports.append(report)
        if on_done:
            on_done(report)
    return reports


# ============ Presets ============

FAMILIES = ("logistic", "tree", "gbm")


def _cell(dataset: str, seed: int, family: str, strategy: str = mitigation.NONE,
          sensitive: str = "gender", balance: bool = False) -> ExperimentConfig:
    name = f"{models.LABELS[family]}-{strategy}-{sensitive}" + ("-balanced" if balance else "")
    return ExperimentConfig(
        name=name, dataset=dataset, family=family, strategy=strategy,
        sensitive=sensitive, seed=seed, balance=balance,
    )


def _compare(strategy: str) -> Callable[[str, int], list[ExperimentConfig]]:
    def build(dataset: str, seed: int) -> list[ExperimentConfig]:
        return [
            _cell(dataset, seed, family, s)
            for family in FAMILIES
            for s in (mitigation.NONE, strategy)
        ]
    return build


PRESETS: dict[str, Callable[[str, int], list[ExperimentConfig]]] = {
    # accuracy and TP/TN rates of the three models
    "fig3": lambda dataset, seed: [_cell(dataset, seed, f) for f in FAMILIES],
    # classifier DI against the Ref DI, both sensitive attributes
    "fig4": lambda dataset, seed: [
        _cell(dataset, seed, f, sensitive=attr) for attr in ("gender", "ethnic") for f in FAMILIES
    ],
    # as many males as females in the data
    "fig5": lambda dataset, seed: [_cell(dataset, seed, f, balance=True) for f in FAMILIES],
    "fig6_top": _compare(mitigation.DROP_SENSITIVE),
    "fig6_bottom": _compare(mitigation.TESTING_COMPLIANT),
    "fig7_top": _compare(mitigation.SEPARATE),
    "fig7_bottom": _compare(mitigation.POSITIVE_DISCRIMINATION),
    # gradient boosting under every strategy
    "fig8": lambda dataset, seed: [_cell(dataset, seed, "gbm", s) for s in mitigation.STRATEGIES],
}


def preset(name: str, seed: int, dataset: str = "adult") -> list[ExperimentConfig]:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}', expected one of {', '.join(sorted(PRESETS))}")
    return PRESETS[name](dataset, seed)


def load_experiments(path: Path, seed: Optional[int] = None) -> list[ExperimentConfig]:
    """Experiment list from a TOML (``[[experiment]]`` tables) or JSON file.

    ``seed``, if given, overrides the seed of every entry.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Experiment file not found: {path}")
    try:
        if path.suffix == ".toml":
            with path.open("rb") as f:
                raw = tomllib.load(f).get("experiment", [])
        elif path.suffix == ".json":
            doc = json.loads(path.read_text(encoding="utf-8"))
            raw = doc.get("experiment", []) if isinstance(doc, dict) else doc
        else:
            raise ConfigError(f"Experiment file must be .toml or .json: {path}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e

    configs = []
    for i, entry in enumerate(raw):
        entry = dict(entry)
        entry.setdefault("name", f"experiment-{i}")
        if seed is not None:
            entry["seed"] = seed
        configs.append(ExperimentConfig.from_dict(entry))
    return configs


def summarize(report: ExperimentReport) -> list[dict]:
    """Plot-ready rows: one per fold, one aggregate ("mean") row and one "ref" row."""
    if not report.folds:
        raise ArgumentError(f"Report '{report.config.name}' has no folds to summarize")
    names = report.metric_names()
    rows = [{"row": "fold", "fold": f.fold, **{k: f.metrics().get(k) for k in names}} for f in report.folds]
    aggregates = report.aggregates()
    rows.append({"row": "mean", "fold": None, **{k: (aggregates[k] or {}).get("mean") for k in names}})
    ref = {k: None for k in names}
    if report.ref_full is not None:
        ref["ref_di"] = report.ref_full.point
    rows.append({"row": "ref", "fold": None, **ref})
    return rows
