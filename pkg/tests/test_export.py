"""Report envelope, CSV layouts and rich tables."""

import io
import json

import pandas as pd
import pytest
from rich.console import Console

from faircheck_cli import __version__, export
from faircheck_cli.harness import ExperimentConfig, ExperimentReport, run_cross_validation
from faircheck_cli.inference import CIEstimate, TestResult

from conftest import synthetic_dataset

ESTIMATE = CIEstimate(point=0.5, sigma=0.8, n=200, level=0.95, lower=0.39, upper=0.61)


def render(table) -> str:
    out = Console(record=True, width=160)
    out.print(table)
    return out.export_text()


@pytest.fixture(scope="module")
def report():
    cfg = ExperimentConfig(name="dt", family="tree", k=2, seed=1)
    return run_cross_validation(cfg, synthetic_dataset(n=160, seed=4))


def test_document_envelope():
    doc = export.document("audit", {"dataset": "toy", "n": 3})
    assert doc["format"] == "faircheck-report"
    assert doc["version"] == 1
    assert doc["tool_version"] == __version__
    assert (doc["kind"], doc["dataset"], doc["n"]) == ("audit", "toy", 3)


def test_dumps_is_sorted_and_strict():
    text = export.dumps({"b": 1, "a": None})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")
    with pytest.raises(ValueError):
        export.dumps({"x": float("nan")})


def test_write_json_creates_directories(tmp_path):
    path = export.write_json({"k": 1}, tmp_path / "deep" / "out.json")
    assert json.loads(path.read_text()) == {"k": 1}


def test_schema_describes_the_envelope():
    schema = export.load_schema()
    assert schema["properties"]["format"]["const"] == export.REPORT_FORMAT
    assert set(schema["properties"]["kind"]["enum"]) == {"audit", "bootstrap", "experiment", "train-eval", "mitigate"}
    assert set(schema["$defs"]["estimate"]["required"]) == set(ESTIMATE.to_dict())


def test_csv_keeps_column_order_and_blanks():
    rows = [export.estimate_row("di_data", ESTIMATE), {"index": "di_classifier"}]
    text = export.csv_text(rows, export.ESTIMATE_COLUMNS)
    assert text.splitlines()[0] == ",".join(export.ESTIMATE_COLUMNS)
    frame = pd.read_csv(io.StringIO(text))
    assert list(frame["index"]) == ["di_data", "di_classifier"]
    assert frame["point"][0] == 0.5
    assert pd.isna(frame["point"][1])


def test_experiment_rows(report):
    rows = export.experiment_rows([report])
    assert all(set(r) == set(export.EXPERIMENT_COLUMNS) for r in rows)
    n_metrics = len(report.folds[0].metrics())
    assert [r["row"] for r in rows].count("fold") == 2 * n_metrics
    assert [r["row"] for r in rows].count("mean") == len(report.aggregates())
    (ref,) = [r for r in rows if r["row"] == "ref"]
    assert ref["value"] == report.ref_full.point
    di_row = next(r for r in rows if r["row"] == "fold" and r["metric"] == "di")
    assert di_row["lower"] == report.folds[0].di.lower
    accuracy_row = next(r for r in rows if r["row"] == "fold" and r["metric"] == "accuracy")
    assert accuracy_row["lower"] is None


def test_failed_reports_have_no_rows():
    failed = ExperimentReport(config=ExperimentConfig(name="x"), error="ConfigError: nope", error_code=1)
    assert export.experiment_rows([failed]) == []
    assert "ConfigError: nope" in render(export.suite_table([failed]))


def test_tables_render_values_and_undefined_cells(report):
    text = render(export.estimates_table("DI", [("di_data", ESTIMATE), ("tp_ratio", None)]))
    assert "0.5000" in text and "0.3900" in text
    assert "undefined" in text

    test = TestResult(statistic=-1.2, beta=0.8, alpha=0.05, reject=False, p_value=0.1151,
                      direction="fairness", point=0.7, sigma=0.5, n=100)
    assert "DI > 0.8" in render(export.tests_table([("di_data", test)]))

    assert "S=0" in render(export.evaluation_table("holdout", report.folds[0].evaluation))
    assert "dt" in render(export.suite_table([report]))
    dispersion = render(export.dispersion_table(report))
    assert "median" in dispersion and "accuracy" in dispersion
