"""Report writers: versioned JSON, flat CSV and rich tables."""

import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import pandas as pd
from rich.table import Table

from . import __version__
from .config import HUMAN_DECIMALS, REPORT_FORMAT_VERSION
from .harness import ExperimentReport
from .inference import CIEstimate, TestResult
from .models import EvalMetrics

REPORT_FORMAT = "faircheck-report"
SCHEMA_PATH = Path(__file__).parent / "schemas" / "report.schema.json"

# Flat CSV layouts (column order is part of the format)
EXPERIMENT_COLUMNS = [
    "experiment", "dataset", "family", "strategy", "sensitive", "balanced",
    "row", "fold", "seed", "metric", "value", "lower", "upper",
]
ESTIMATE_COLUMNS = ["index", "method", "point", "sigma", "n", "level", "lower", "upper", "n_dropped"]


def document(kind: str, body: Mapping[str, Any]) -> dict:
    """Wrap a report body in the versioned envelope."""
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_FORMAT_VERSION,
        "tool_version": __version__,
        "kind": kind,
        **body,
    }


def dumps(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(doc: Mapping[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8")
    return path


def csv_text(rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> str:
    frame = pd.DataFrame(list(rows), columns=list(columns)).convert_dtypes()
    return frame.to_csv(index=False, lineterminator="\n")


def write_csv(rows: Iterable[Mapping[str, Any]], columns: Sequence[str], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(rows, columns), encoding="utf-8")
    return path


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


# ============ Row builders ============

def estimate_row(index: str, est: CIEstimate) -> dict:
    return {
        "index": index,
        "method": est.method,
        "point": est.point,
        "sigma": est.sigma,
        "n": est.n,
        "level": est.level,
        "lower": est.lower,
        "upper": est.upper,
        "n_dropped": est.n_dropped,
    }


def experiment_rows(reports: Sequence[ExperimentReport]) -> list[dict]:
    """One row per (fold, metric), then the "mean" rows and the full-data "ref" row."""
    rows = []
    for report in reports:
        cfg = report.config
        head = {
            "experiment": cfg.name,
            "dataset": cfg.dataset,
            "family": cfg.family,
            "strategy": cfg.strategy,
            "sensitive": cfg.sensitive,
            "balanced": cfg.balance,
        }
        for fold in report.folds:
            intervals = fold.intervals()
            for metric, value in fold.metrics().items():
                ci = intervals.get(metric)
                rows.append({
                    **head, "row": "fold", "fold": fold.fold, "seed": fold.seed, "metric": metric,
                    "value": value,
                    "lower": ci.lower if ci else None,
                    "upper": ci.upper if ci else None,
                })
        for metric, agg in report.aggregates().items():
            rows.append({
                **head, "row": "mean", "fold": None, "seed": cfg.seed, "metric": metric,
                "value": agg["mean"] if agg else None,
                "lower": agg["min"] if agg else None,
                "upper": agg["max"] if agg else None,
            })
        if report.ref_full is not None:
            ref = report.ref_full
            rows.append({
                **head, "row": "ref", "fold": None, "seed": cfg.seed, "metric": "ref_di",
                "value": ref.point, "lower": ref.lower, "upper": ref.upper,
            })
    return rows


# ============ Human output ============

def fmt(value: Optional[float]) -> str:
    if value is None:
        return "[dim]undefined[/dim]"
    return f"{value:.{HUMAN_DECIMALS}f}"


def estimates_table(title: str, entries: Sequence[tuple[str, Optional[CIEstimate]]]) -> Table:
    table = Table(title=title)
    table.add_column("Index", style="cyan")
    table.add_column("Estimate", justify="right")
    table.add_column("Lower", justify="right")
    table.add_column("Upper", justify="right")
    table.add_column("Sigma", justify="right", style="dim")
    table.add_column("n", justify="right", style="dim")
    for name, est in entries:
        if est is None:
            table.add_row(name, fmt(None), "", "", "", "")
            continue
        table.add_row(name, fmt(est.point), fmt(est.lower), fmt(est.upper), fmt(est.sigma), str(est.n))
    return table


def tests_table(results: Sequence[tuple[str, TestResult]]) -> Table:
    """Rows of (index name, test result)."""
    table = Table(title="DI level tests")
    table.add_column("Index", style="cyan")
    table.add_column("H1")
    table.add_column("Statistic", justify="right")
    table.add_column("p-value", justify="right")
    table.add_column("Reject H0", justify="center")
    for name, r in results:
        h1 = f"DI {'>' if r.direction == 'fairness' else '<'} {r.beta:g}"
        verdict = "[green]yes[/green]" if r.reject else "[dim]no[/dim]"
        table.add_row(name, h1, fmt(r.statistic), fmt(r.p_value), verdict)
    return table


def evaluation_table(title: str, ev: EvalMetrics) -> Table:
    table = Table(title=title)
    table.add_column("Rows", style="cyan")
    table.add_column("n", justify="right", style="dim")
    table.add_column("Accuracy", justify="right")
    table.add_column("TPR", justify="right")
    table.add_column("TNR", justify="right")
    table.add_column("FPR", justify="right")
    table.add_column("FP", justify="right")
    for name, rates in (("all", ev.overall), ("S=0", ev.group0), ("S=1", ev.group1)):
        table.add_row(
            name,
            str(rates.n),
            fmt(rates.accuracy),
            fmt(rates.true_positive_rate),
            fmt(rates.true_negative_rate),
            fmt(rates.false_positive_rate),
            str(rates.false_positives),
        )
    return table


SUITE_METRICS = ("accuracy", "tpr", "tnr", "di", "ref_di", "flip_fraction")


def suite_table(reports: Sequence[ExperimentReport]) -> Table:
    """Mean of the main metrics per experiment."""
    table = Table(title="Cross-validation means")
    table.add_column("Experiment", style="cyan")
    for metric in SUITE_METRICS:
        table.add_column(metric, justify="right")
    for report in reports:
        if not report.ok:
            table.add_row(report.config.name, f"[red]{report.error}[/red]", *[""] * (len(SUITE_METRICS) - 1))
            continue
        table.add_row(report.config.name, *[fmt(report.mean(m)) for m in SUITE_METRICS])
    return table


def dispersion_table(report: ExperimentReport) -> Table:
    """Five-number summary per metric, for boxplot reconstruction."""
    table = Table(title=f"{report.config.name} ({len(report.folds)} folds)")
    table.add_column("Metric", style="cyan")
    for col in ("mean", "min", "q1", "median", "q3", "max"):
        table.add_column(col, justify="right")
    for metric, agg in report.aggregates().items():
        if agg is None:
            table.add_row(metric, fmt(None), "", "", "", "", "")
            continue
        table.add_row(metric, *[fmt(agg[c]) for c in ("mean", "min", "q1", "median", "q3", "max")])
    return table
