"""faircheck CLI - disparate impact audits, bias mitigation and cross-validated experiments."""

import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
import typer

try:  # Typer >= 0.20 vendors click; its exceptions are not click's
    from typer import _click as click
except ImportError:
    import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from . import export, harness, inference, mitigation, models, recipes
from .config import (
    BOOTSTRAP_MIN_REPLICATES,
    BOOTSTRAP_REPLICATES,
    CONFIDENCE_LEVEL,
    DI_LEVEL,
    SIGNIFICANCE,
    TARGET_DI,
)
from .dataset import EncodedDataset, holdout_split
from .errors import ArgumentError, ConfigError, FaircheckError
from .metrics import CLASSIFIER, DATA, TN, TP, GroupedCounts, count_groups
from .models import ThresholdedClassifier, evaluate
from .models.serialize import save_scorer

app = typer.Typer(
    name="faircheck",
    help="Disparate impact auditing and bias mitigation for tabular classifiers",
    no_args_is_help=True,
)
console = Console()
err_console = Console(stderr=True)

HOLDOUT_FRACTION = 0.3


class OutputFormat(str, Enum):
    human = "human"
    json = "json"
    csv = "csv"


class Strategy(str, Enum):
    none = mitigation.NONE
    drop_sensitive = mitigation.DROP_SENSITIVE
    testing_compliant = mitigation.TESTING_COMPLIANT
    separate = mitigation.SEPARATE
    positive_discrimination = mitigation.POSITIVE_DISCRIMINATION


class Statistic(str, Enum):
    DI = inference.DI
    TP = TP
    TN = TN


def setup_logging(verbose: bool) -> None:
    """Route package logs to stderr through rich."""
    package = logging.getLogger("faircheck_cli")
    package.handlers.clear()
    package.addHandler(RichHandler(console=err_console, show_time=False, show_path=False))
    package.setLevel(logging.DEBUG if verbose else logging.WARNING)


@app.callback()
def callback(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show debug logging"),
):
    """Measure disparate impact with confidence intervals, train baselines and test mitigation strategies.

    Dataset configs are looked up in $FAIRCHECK_CONFIG_DIR (default ~/.faircheck).
    """
    setup_logging(verbose)


@contextmanager
def handle_errors():
    """Print faircheck errors in red and exit with their code."""
    try:
        yield
    except FaircheckError as e:
        err_console.print(f"[red]{escape(str(e))}[/red]")
        raise typer.Exit(e.exit_code)
    except OSError as e:
        err_console.print(f"[red]{escape(str(e))}[/red]")
        raise typer.Exit(1)


# ============ Helpers ============

def check_probability(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ArgumentError(f"--{name} must be in (0, 1), got {value}")


def parse_params(items: list[str]) -> dict:
    """``key=value`` pairs; values are read as JSON when possible."""
    params = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ArgumentError(f"--param expects key=value, got '{item}'")
        try:
            params[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            params[key.strip()] = raw
    return params


def load(dataset: str, sensitive: Optional[str]) -> tuple[recipes.DatasetConfig, EncodedDataset]:
    cfg = recipes.load_config(dataset)
    cfg.sensitive_spec(sensitive)
    return cfg, recipes.load_dataset(cfg, sensitive)


def read_predictions(path: Path, n: int) -> np.ndarray:
    """Single-column CSV of 0/1 decisions, row-aligned with the dataset; a header line is allowed."""
    if not path.exists():
        raise ConfigError(f"Predictions file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame({0: []})
    if frame.shape[1] != 1:
        raise ConfigError(f"Predictions file must have a single column, found {frame.shape[1]}")
    values = frame[0].str.strip().tolist()
    if values and values[0] not in ("0", "1"):
        values = values[1:]
    if len(values) != n:
        raise ConfigError(f"Predictions file has {len(values)} rows but the dataset has {n}")
    bad = next((i for i, v in enumerate(values) if v not in ("0", "1")), None)
    if bad is not None:
        raise ConfigError(f"Predictions must be 0 or 1, got '{values[bad]}' at row {bad + 1}")
    return np.array([int(v) for v in values], dtype=np.int64)


def predict_with_model(path: Path, ds: EncodedDataset) -> np.ndarray:
    clf = mitigation.load_classifier(path)
    try:
        return clf.predict(ds.X, ds.s)
    except (ValueError, IndexError) as e:
        raise ConfigError(f"Model {path} does not match the dataset's {ds.d} features: {e}") from e


def decisions(ds: EncodedDataset, predictions: Optional[Path], model: Optional[Path]) -> Optional[np.ndarray]:
    if predictions and model:
        raise ArgumentError("Use either --predictions or --model, not both")
    if predictions:
        return read_predictions(predictions, ds.n)
    if model:
        return predict_with_model(model, ds)
    return None


class Collector:
    """Runs estimators, keeping undefined-metric failures instead of stopping."""

    def __init__(self):
        self.estimates: dict[str, Optional[inference.CIEstimate]] = {}
        self.tests: list[tuple[str, inference.TestResult]] = []
        self.errors: dict[str, str] = {}

    def estimate(self, name: str, fn: Callable[[], inference.CIEstimate]) -> None:
        try:
            self.estimates[name] = fn()
        except FaircheckError as e:
            if e.exit_code != 2:
                raise
            self.estimates[name] = None
            self.errors[name] = str(e)

    def level_tests(self, name: str, counts: GroupedCounts, beta: float, alpha: float, target: str) -> None:
        for direction in inference.DIRECTIONS:
            key = f"{name}:{direction}"
            try:
                self.tests.append((name, inference.di_level_test(counts, beta, alpha, direction, target)))
            except FaircheckError as e:
                if e.exit_code != 2:
                    raise
                self.errors[key] = str(e)

    def body(self) -> dict:
        return {
            "estimates": {k: v.to_dict() if v else None for k, v in self.estimates.items()},
            "tests": [dict(t.to_dict(), index=name) for name, t in self.tests],
            "errors": dict(self.errors),
        }

    def rows(self) -> list[dict]:
        return [export.estimate_row(k, v) for k, v in self.estimates.items() if v is not None]

    def entries(self) -> list[tuple[str, Optional[inference.CIEstimate]]]:
        return list(self.estimates.items())


def emit(
    doc: dict,
    rows: list[dict],
    columns: list[str],
    fmt: OutputFormat,
    output: Optional[Path],
    render: Callable[[Console], None],
) -> None:
    """Write a report as JSON, CSV or rich tables, to ``output`` or stdout."""
    if fmt == OutputFormat.json:
        if output:
            export.write_json(doc, output)
        else:
            typer.echo(export.dumps(doc), nl=False)
    elif fmt == OutputFormat.csv:
        if output:
            export.write_csv(rows, columns, output)
        else:
            typer.echo(export.csv_text(rows, columns), nl=False)
    elif output:
        output.parent.mkdir(parents=True, exist_ok=True)
        with output.open("w", encoding="utf-8") as f:
            render(Console(file=f, width=120))
    else:
        render(console)
    if output:
        err_console.print(f"[dim]Wrote {output}[/dim]")


def fail_on_errors(errors: dict[str, str]) -> None:
    """Exit 2 when any requested metric was undefined."""
    if not errors:
        return
    for name, message in errors.items():
        err_console.print(f"[red]{name}: {escape(message)}[/red]")
    raise typer.Exit(2)


# ============ Commands ============

@app.command()
def audit(
    dataset: str = typer.Argument(..., help="Built-in dataset name or dataset config file (.toml/.json)"),
    sensitive: Optional[str] = typer.Option(None, "--sensitive", "-s", help="Sensitive attribute of the config"),
    predictions: Optional[Path] = typer.Option(None, "--predictions", "-p", help="Single-column CSV of 0/1 decisions"),
    model: Optional[Path] = typer.Option(None, "--model", "-m", help="Saved model JSON to score the dataset with"),
    level: float = typer.Option(CONFIDENCE_LEVEL, "--level", help="Confidence level"),
    beta: float = typer.Option(DI_LEVEL, "--beta", help="DI level to test against"),
    alpha: float = typer.Option(SIGNIFICANCE, "--alpha", help="Significance of the DI level tests"),
    fmt: OutputFormat = typer.Option(OutputFormat.human, "--format", "-f", help="Output format"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write the report to a file"),
):
    """Disparate impact of the data (and of decisions) with confidence intervals."""
    with handle_errors():
        check_probability("level", level)
        check_probability("alpha", alpha)
        if beta <= 0:
            raise ArgumentError(f"--beta must be positive, got {beta}")

        cfg, ds = load(dataset, sensitive)
        yhat = decisions(ds, predictions, model)
        counts = count_groups(ds.y, ds.s, yhat)

        results = Collector()
        results.estimate("di_data", lambda: inference.di_confidence_interval(counts, level, DATA))
        results.level_tests("di_data", counts, beta, alpha, DATA)
        if yhat is not None:
            results.estimate("di_classifier", lambda: inference.di_confidence_interval(counts, level, CLASSIFIER))
            results.estimate("tp_ratio", lambda: inference.rate_ratio_confidence_interval(counts, TP, level))
            results.estimate("tn_ratio", lambda: inference.rate_ratio_confidence_interval(counts, TN, level))
            results.level_tests("di_classifier", counts, beta, alpha, CLASSIFIER)

        doc = export.document("audit", {
            "dataset": cfg.name,
            "sensitive": sensitive or cfg.default_sensitive,
            "n": ds.n,
            "groups_swapped": ds.groups_swapped,
            "counts": counts.to_dict(),
            **results.body(),
        })

        def render(out: Console) -> None:
            out.print(export.estimates_table(f"{cfg.name}: {ds.n} rows, level {level:g}", results.entries()))
            if results.tests:
                out.print(export.tests_table(results.tests))

        emit(doc, results.rows(), export.ESTIMATE_COLUMNS, fmt, output, render)
        fail_on_errors(results.errors)


@app.command("train-eval")
def train_eval(
    dataset: str = typer.Argument(..., help="Built-in dataset name or dataset config file"),
    family: str = typer.Option("LR", "--family", "-m", help="Model family: LR, DT or GB"),
    sensitive: Optional[str] = typer.Option(None, "--sensitive", "-s", help="Sensitive attribute of the config"),
    param: list[str] = typer.Option([], "--param", "-P", help="Hyperparameter override key=value (repeatable)"),
    holdout: float = typer.Option(HOLDOUT_FRACTION, "--holdout", help="Fraction of rows held out"),
    seed: int = typer.Option(0, "--seed", help="Seed of the holdout split"),
    level: float = typer.Option(CONFIDENCE_LEVEL, "--level", help="Confidence level"),
    save: Optional[Path] = typer.Option(None, "--save", help="Save the trained model JSON"),
    fmt: OutputFormat = typer.Option(OutputFormat.human, "--format", "-f", help="Output format"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write the report to a file"),
):
    """Train one model, report training and holdout metrics."""
    with handle_errors():
        check_probability("holdout", holdout)
        check_probability("level", level)
        params = models.params_from_dict(family, parse_params(param))

        cfg, ds = load(dataset, sensitive)
        train_idx, test_idx = holdout_split(ds.n, holdout, seed)
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        scorer = models.train(train, family, params, seed=seed)
        clf = ThresholdedClassifier(scorer)
        train_ev, test_ev = evaluate(clf, train), evaluate(clf, test)

        results = Collector()
        results.estimate("di_classifier", lambda: inference.di_confidence_interval(test_ev.counts, level, CLASSIFIER))
        results.estimate("di_data", lambda: inference.di_confidence_interval(test_ev.counts, level, DATA))
        if save:
            save_scorer(scorer, save)

        doc = export.document("train-eval", {
            "dataset": cfg.name,
            "sensitive": sensitive or cfg.default_sensitive,
            "n": ds.n,
            "model": scorer.descriptor(),
            "train": train_ev.to_dict(),
            "holdout": test_ev.to_dict(),
            **results.body(),
        })

        def render(out: Console) -> None:
            out.print(export.evaluation_table(f"{models.LABELS[scorer.family]} training ({train.n} rows)", train_ev))
            out.print(export.evaluation_table(f"{models.LABELS[scorer.family]} holdout ({test.n} rows)", test_ev))
            out.print(export.estimates_table("Holdout DI", results.entries()))

        emit(doc, results.rows(), export.ESTIMATE_COLUMNS, fmt, output, render)
        if save:
            err_console.print(f"[dim]Saved model to {save}[/dim]")
        fail_on_errors(results.errors)


@app.command()
def mitigate(
    dataset: str = typer.Argument(..., help="Built-in dataset name or dataset config file"),
    strategy: Strategy = typer.Option(..., "--strategy", help="Mitigation strategy"),
    family: str = typer.Option("LR", "--family", "-m", help="Model family: LR, DT or GB"),
    sensitive: Optional[str] = typer.Option(None, "--sensitive", "-s", help="Sensitive attribute of the config"),
    param: list[str] = typer.Option([], "--param", "-P", help="Hyperparameter override key=value (repeatable)"),
    target_di: float = typer.Option(TARGET_DI, "--target-di", help="DI target of positive discrimination"),
    holdout: float = typer.Option(HOLDOUT_FRACTION, "--holdout", help="Fraction of rows held out"),
    seed: int = typer.Option(0, "--seed", help="Seed of the holdout split"),
    level: float = typer.Option(CONFIDENCE_LEVEL, "--level", help="Confidence level"),
    save: Optional[Path] = typer.Option(None, "--save", help="Save the mitigated classifier JSON"),
    fmt: OutputFormat = typer.Option(OutputFormat.human, "--format", "-f", help="Output format"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write the report to a file"),
):
    """Apply one mitigation strategy and audit it on a holdout split."""
    with handle_errors():
        check_probability("holdout", holdout)
        check_probability("level", level)
        if target_di <= 0:
            raise ArgumentError(f"--target-di must be positive, got {target_di}")
        params = models.params_from_dict(family, parse_params(param))

        cfg, ds = load(dataset, sensitive)
        train_idx, test_idx = holdout_split(ds.n, holdout, seed)
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        fitted = mitigation.fit_strategy(strategy.value, train, family, params, seed=seed, target_di=target_di)
        ev = evaluate(fitted.classifier, test)

        results = Collector()
        results.estimate("di_classifier", lambda: inference.di_confidence_interval(ev.counts, level, CLASSIFIER))
        results.estimate("tp_ratio", lambda: inference.rate_ratio_confidence_interval(ev.counts, TP, level))
        results.estimate("tn_ratio", lambda: inference.rate_ratio_confidence_interval(ev.counts, TN, level))
        results.estimate("di_data", lambda: inference.di_confidence_interval(ev.counts, level, DATA))
        flip = mitigation.testing_audit(fitted.classifier, test) if test.sensitive_feature_indices else None

        report = None
        if strategy == Strategy.positive_discrimination:
            try:
                report = mitigation.positive_discrimination_report(fitted.classifier, test)
            except FaircheckError as e:
                if e.exit_code != 2:
                    raise
                results.errors["positive_discrimination"] = str(e)
        if save:
            mitigation.save_classifier(fitted.classifier, save)

        doc = export.document("mitigate", {
            "dataset": cfg.name,
            "sensitive": sensitive or cfg.default_sensitive,
            "n": ds.n,
            "strategy": strategy.value,
            "family": models.resolve_family(family),
            "evaluation": ev.to_dict(),
            "flip_fraction": flip,
            "thresholds": fitted.thresholds.to_dict() if fitted.thresholds else None,
            "positive_discrimination": report.to_dict() if report else None,
            **results.body(),
        })

        def render(out: Console) -> None:
            out.print(export.evaluation_table(f"{strategy.value} on holdout ({test.n} rows)", ev))
            out.print(export.estimates_table("Holdout fairness indices", results.entries()))
            if flip is not None:
                out.print(f"[bold]Testing audit flip fraction:[/bold] {export.fmt(flip)}")
            if fitted.thresholds:
                t = fitted.thresholds
                note = "" if t.reached else " [yellow](target not reached)[/yellow]"
                out.print(f"[bold]Thresholds:[/bold] t0={export.fmt(t.t0)}, t1={export.fmt(t.t1)}{note}")
            if report:
                out.print(export.evaluation_table("Baseline (0.5, 0.5)", report.baseline))
                out.print(Panel(
                    "\n".join(
                        f"S={g}: FPR {export.fmt(report.false_positive_rate_delta(g))}, "
                        f"false positives {report.false_positive_count_delta(g):+d}"
                        for g in (0, 1)
                    ),
                    title="False-positive change vs. baseline",
                    border_style="yellow",
                ))

        emit(doc, results.rows(), export.ESTIMATE_COLUMNS, fmt, output, render)
        fail_on_errors(results.errors)


@app.command()
def experiment(
    target: str = typer.Argument(..., help="Preset name (fig3 ... fig8) or experiment file (.toml/.json)"),
    seed: int = typer.Option(..., "--seed", help="Master seed of folds and subsamples"),
    dataset: str = typer.Option("adult", "--dataset", "-d", help="Dataset used by presets"),
    folds: Optional[int] = typer.Option(None, "--folds", "-k", help="Override the number of folds"),
    workers: int = typer.Option(1, "--workers", "-w", help="Folds run in parallel"),
    output_dir: Path = typer.Option(Path("results"), "--output-dir", "-o", help="Directory for the JSON and CSV"),
    dispersion: bool = typer.Option(False, "--dispersion", help="Also print per-experiment five-number summaries"),
):
    """Run a cross-validation suite and write <name>.json and <name>.csv."""
    with handle_errors():
        if workers < 1:
            raise ArgumentError(f"--workers must be at least 1, got {workers}")
        if target in harness.PRESETS:
            configs = harness.preset(target, seed, dataset)
        elif Path(target).suffix in (".toml", ".json"):
            configs = harness.load_experiments(Path(target), seed)
        else:
            raise ConfigError(
                f"Unknown preset '{target}', expected one of {', '.join(sorted(harness.PRESETS))} "
                "or a .toml/.json experiment file"
            )
        if folds is not None:
            configs = [replace(c, k=folds) for c in configs]

        console.print(f"[dim]Running {len(configs)} experiments...[/dim]")

        def done(report: harness.ExperimentReport) -> None:
            if report.ok:
                console.print(f"[dim]  {report.config.name}: {len(report.folds)} folds[/dim]")
            else:
                console.print(f"[yellow]  {report.config.name}: {escape(report.error)}[/yellow]")

        reports = harness.run_suite(configs, workers=workers, on_done=done)
        name = Path(target).stem
        doc = export.document("experiment", {"suite": name, "reports": [r.to_dict() for r in reports]})
        json_path = export.write_json(doc, output_dir / f"{name}.json")
        csv_path = export.write_csv(export.experiment_rows(reports), export.EXPERIMENT_COLUMNS, output_dir / f"{name}.csv")

        console.print()
        console.print(export.suite_table(reports))
        if dispersion:
            for report in reports:
                if report.ok:
                    console.print(export.dispersion_table(report))
        console.print(Panel(
            f"[green]{sum(r.ok for r in reports)}/{len(reports)} experiments completed[/green]\n\n"
            f"JSON: {json_path}\nCSV:  {csv_path}",
            title="Suite Complete",
            border_style="green",
        ))
        failed = [r for r in reports if not r.ok]
        if failed:
            raise typer.Exit(max(r.error_code or 1 for r in failed))


@app.command("bootstrap-compare")
def bootstrap_compare(
    dataset: str = typer.Argument(..., help="Built-in dataset name or dataset config file"),
    seed: int = typer.Option(..., "--seed", help="Seed of the bootstrap resampling"),
    replicates: list[int] = typer.Option([BOOTSTRAP_REPLICATES], "--replicates", "-B", help="Replicate count (repeatable)"),
    statistic: Statistic = typer.Option(Statistic.DI, "--statistic", help="DI, TP or TN ratio"),
    sensitive: Optional[str] = typer.Option(None, "--sensitive", "-s", help="Sensitive attribute of the config"),
    predictions: Optional[Path] = typer.Option(None, "--predictions", "-p", help="Single-column CSV of 0/1 decisions"),
    model: Optional[Path] = typer.Option(None, "--model", "-m", help="Saved model JSON to score the dataset with"),
    level: float = typer.Option(CONFIDENCE_LEVEL, "--level", help="Confidence level"),
    replicates_out: Optional[Path] = typer.Option(None, "--replicates-out", help="CSV of the replicate values"),
    fmt: OutputFormat = typer.Option(OutputFormat.human, "--format", "-f", help="Output format"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write the report to a file"),
):
    """Delta-method interval next to percentile bootstrap intervals."""
    with handle_errors():
        check_probability("level", level)
        for b in replicates:
            if b < BOOTSTRAP_MIN_REPLICATES:
                raise ArgumentError(f"--replicates must be at least {BOOTSTRAP_MIN_REPLICATES}, got {b}")

        cfg, ds = load(dataset, sensitive)
        yhat = decisions(ds, predictions, model)
        stat = statistic.value
        if stat != inference.DI and yhat is None:
            raise ArgumentError(f"The {stat} ratio needs --predictions or --model")
        counts = count_groups(ds.y, ds.s, yhat)
        if stat == inference.DI:
            theory = inference.di_confidence_interval(counts, level, CLASSIFIER if yhat is not None else DATA)
        else:
            theory = inference.rate_ratio_confidence_interval(counts, stat, level)

        draws = {b: inference.bootstrap_replicates(ds.y, ds.s, yhat, stat, b, seed) for b in replicates}
        boots = {b: inference.percentile_interval(reps, level) for b, reps in draws.items()}
        comparisons = [
            {
                "replicates": b,
                "lower_diff": abs(est.lower - theory.lower),
                "upper_diff": abs(est.upper - theory.upper),
            }
            for b, est in boots.items()
        ]
        if replicates_out:
            rows = [
                {"replicates": b, "index": i, "value": v}
                for b, reps in draws.items()
                for i, v in enumerate(reps.values.tolist())
            ]
            export.write_csv(rows, ["replicates", "index", "value"], replicates_out)
            err_console.print(f"[dim]Wrote {replicates_out}[/dim]")

        estimates = {"delta": theory, **{f"bootstrap_B{b}": est for b, est in boots.items()}}
        doc = export.document("bootstrap", {
            "dataset": cfg.name,
            "sensitive": sensitive or cfg.default_sensitive,
            "n": ds.n,
            "statistic": stat,
            "seed": seed,
            "estimates": {k: v.to_dict() for k, v in estimates.items()},
            "comparisons": comparisons,
        })

        def render(out: Console) -> None:
            out.print(export.estimates_table(f"{stat} on {cfg.name} ({ds.n} rows)", list(estimates.items())))
            table = Table(title="Bootstrap vs. Delta method")
            table.add_column("Replicates", justify="right", style="cyan")
            table.add_column("Dropped", justify="right", style="dim")
            table.add_column("|lower diff|", justify="right")
            table.add_column("|upper diff|", justify="right")
            for row in comparisons:
                b = row["replicates"]
                table.add_row(str(b), str(boots[b].n_dropped), export.fmt(row["lower_diff"]), export.fmt(row["upper_diff"]))
            out.print(table)

        rows = [export.estimate_row(k, v) for k, v in estimates.items()]
        emit(doc, rows, export.ESTIMATE_COLUMNS, fmt, output, render)


def main() -> None:
    """Console entry point. Usage errors exit with 1 like other input errors."""
    try:
        code = app(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
