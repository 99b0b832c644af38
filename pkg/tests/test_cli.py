"""Command-line surface: exit codes, report files and the Adult reproduction."""

import json
import sys

import jsonschema
import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from faircheck_cli import export, inference, recipes
from faircheck_cli.cli import app, main
from faircheck_cli.metrics import count_groups, disparate_impact

from conftest import needs_data

runner = CliRunner()


def run_json(args, out):
    """Invoke with ``-f json -o out`` and return (exit code, parsed report)."""
    result = runner.invoke(app, [*args, "-f", "json", "-o", str(out)])
    doc = json.loads(out.read_text()) if out.exists() else None
    return result.exit_code, doc


@pytest.fixture
def toy(toy_config):
    return str(toy_config)


@pytest.fixture
def toy_ds(toy):
    return recipes.load_dataset(recipes.load_config(toy))


def write_predictions(path, values, header=True):
    lines = (["decision"] if header else []) + [str(int(v)) for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path


# ============ audit ============

def test_audit_reports_data_di(toy, toy_ds, tmp_path):
    code, doc = run_json(["audit", toy], tmp_path / "audit.json")
    assert code == 0
    assert doc["kind"] == "audit"
    assert doc["n"] == 300
    expected = disparate_impact(count_groups(toy_ds.y, toy_ds.s)).value
    di = doc["estimates"]["di_data"]
    assert di["point"] == pytest.approx(expected)
    assert di["lower"] < di["point"] < di["upper"]
    assert {t["direction"] for t in doc["tests"]} == {"fairness", "discrimination"}
    assert doc["errors"] == {}


def test_audit_of_label_copies_matches_the_data(toy, toy_ds, tmp_path):
    preds = write_predictions(tmp_path / "preds.csv", toy_ds.y)
    code, doc = run_json(["audit", toy, "-p", str(preds)], tmp_path / "audit.json")
    estimates = doc["estimates"]
    assert estimates["di_classifier"]["point"] == pytest.approx(estimates["di_data"]["point"])
    # perfect decisions leave the TP and TN ratios without variance
    assert code == 2
    assert estimates["tp_ratio"] is None
    assert set(doc["errors"]) == {"tp_ratio", "tn_ratio"}


def test_audit_csv_output(toy, tmp_path):
    out = tmp_path / "audit.csv"
    result = runner.invoke(app, ["audit", toy, "-f", "csv", "-o", str(out)])
    assert result.exit_code == 0
    frame = pd.read_csv(out)
    assert list(frame["index"]) == ["di_data"]


def test_audit_human_output(toy):
    result = runner.invoke(app, ["audit", toy])
    assert result.exit_code == 0
    assert "di_data" in result.output


@pytest.mark.parametrize("values", [[1, 0, 1], [2] * 300])
def test_bad_predictions_exit_1(toy, tmp_path, values):
    preds = write_predictions(tmp_path / "preds.csv", values, header=False)
    result = runner.invoke(app, ["audit", toy, "-p", str(preds)])
    assert result.exit_code == 1


@pytest.mark.parametrize("args", [
    ["--level", "1.5"],
    ["--beta", "0"],
    ["-s", "age"],
    ["-p", "a.csv", "-m", "b.json"],
])
def test_bad_arguments_exit_1(toy, args):
    assert runner.invoke(app, ["audit", toy, *args]).exit_code == 1


def test_unknown_dataset_exits_1(config_dir):
    result = runner.invoke(app, ["audit", "mystery"])
    assert result.exit_code == 1
    assert "mystery" in result.output


def test_degenerate_decisions_exit_2(toy, tmp_path):
    preds = write_predictions(tmp_path / "preds.csv", np.ones(300))
    code, doc = run_json(["audit", toy, "-p", str(preds)], tmp_path / "audit.json")
    assert code == 2
    assert doc["estimates"]["di_classifier"] is None
    assert "di_classifier" in doc["errors"]
    assert doc["estimates"]["di_data"] is not None


# ============ train-eval and mitigate ============

def test_train_eval_saves_a_model_audit_can_use(toy, tmp_path):
    model = tmp_path / "dt.json"
    code, doc = run_json(
        ["train-eval", toy, "--family", "DT", "-P", "max_depth=3", "--seed", "2", "--save", str(model)],
        tmp_path / "train.json",
    )
    assert code == 0
    assert model.exists()
    assert doc["model"]["family"] == "tree"
    assert doc["train"]["overall"]["n"] + doc["holdout"]["overall"]["n"] == 300

    code, audit = run_json(["audit", toy, "-m", str(model)], tmp_path / "audit.json")
    assert code == 0
    assert audit["estimates"]["di_classifier"] is not None


def test_train_eval_rejects_bad_params(toy):
    assert runner.invoke(app, ["train-eval", toy, "-P", "max_depth"]).exit_code == 1
    assert runner.invoke(app, ["train-eval", toy, "--family", "svm"]).exit_code == 1


def test_mitigate_positive_discrimination(toy, tmp_path):
    saved = tmp_path / "clf.json"
    code, doc = run_json(
        ["mitigate", toy, "--strategy", "positive-discrimination", "--save", str(saved)],
        tmp_path / "pd.json",
    )
    assert code in (0, 2)
    assert doc["strategy"] == "positive-discrimination"
    assert doc["thresholds"]["t1"] == 0.5
    assert doc["flip_fraction"] is not None
    assert saved.exists()
    if doc["positive_discrimination"] is not None:
        assert "baseline" in doc["positive_discrimination"]


def test_mitigate_drop_sensitive_passes_the_testing_audit(toy, tmp_path):
    code, doc = run_json(["mitigate", toy, "--strategy", "drop-sensitive", "--family", "DT"], tmp_path / "m.json")
    assert code in (0, 2)
    assert doc["flip_fraction"] == 0.0
    assert doc["thresholds"] is None


def test_mitigate_needs_a_strategy(toy):
    assert runner.invoke(app, ["mitigate", toy]).exit_code != 0


# ============ bootstrap-compare ============

def test_bootstrap_compare(toy, tmp_path):
    reps = tmp_path / "reps.csv"
    args = ["bootstrap-compare", toy, "--seed", "3", "-B", "100", "-B", "200", "--replicates-out", str(reps)]
    code, doc = run_json(args, tmp_path / "boot.json")
    assert code == 0
    assert set(doc["estimates"]) == {"delta", "bootstrap_B100", "bootstrap_B200"}
    assert doc["estimates"]["bootstrap_B200"]["method"] == "bootstrap"
    assert [c["replicates"] for c in doc["comparisons"]] == [100, 200]
    assert len(pd.read_csv(reps)) == 300

    _, again = run_json(args, tmp_path / "again.json")
    assert again["estimates"] == doc["estimates"]


def test_bootstrap_compare_draws_each_replicate_set_once(toy, tmp_path, monkeypatch):
    sizes = []
    draw = inference.bootstrap_replicates

    def counted(*args, **kwargs):
        sizes.append(args[4])
        return draw(*args, **kwargs)

    monkeypatch.setattr(inference, "bootstrap_replicates", counted)
    reps = tmp_path / "reps.csv"
    args = ["bootstrap-compare", toy, "--seed", "2", "-B", "150", "--replicates-out", str(reps)]
    code, doc = run_json(args, tmp_path / "boot.json")
    assert code == 0
    assert sizes == [150]
    # the written replicates are the ones behind the interval
    values = pd.read_csv(reps)["value"].to_numpy()
    est = doc["estimates"]["bootstrap_B150"]
    assert est["lower"] == pytest.approx(np.percentile(values, 2.5))
    assert est["upper"] == pytest.approx(np.percentile(values, 97.5))


@pytest.mark.parametrize("args", [["-B", "50"], ["--statistic", "TP"]])
def test_bootstrap_compare_argument_errors(toy, args):
    assert runner.invoke(app, ["bootstrap-compare", toy, "--seed", "1", *args]).exit_code == 1


# ============ experiment ============

def test_experiment_file_writes_json_and_csv(toy, tmp_path):
    suite = tmp_path / "suite.toml"
    suite.write_text(
        f'[[experiment]]\nname = "dt"\ndataset = "{toy}"\nfamily = "DT"\nk = 3\n'
        f'params = {{max_depth = 3}}\n',
        encoding="utf-8",
    )
    out = tmp_path / "results"
    result = runner.invoke(app, ["experiment", str(suite), "--seed", "4", "-o", str(out), "--dispersion"])
    assert result.exit_code == 0
    doc = json.loads((out / "suite.json").read_text())
    assert doc["kind"] == "experiment"
    (report,) = doc["reports"]
    assert report["config"]["seed"] == 4
    assert len(report["folds"]) == 3
    rows = pd.read_csv(out / "suite.csv")
    assert set(rows["row"]) == {"fold", "mean", "ref"}


def test_experiment_reports_failed_entries(config_dir, tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps([{"name": "gone", "dataset": "mystery", "k": 3}]))
    result = runner.invoke(app, ["experiment", str(suite), "--seed", "1", "-o", str(tmp_path / "out")])
    assert result.exit_code == 1
    doc = json.loads((tmp_path / "out" / "suite.json").read_text())
    assert doc["reports"][0]["error"].startswith("ConfigError")


def test_unknown_preset_exits_1(tmp_path):
    result = runner.invoke(app, ["experiment", "fig9", "--seed", "1", "-o", str(tmp_path)])
    assert result.exit_code == 1
    assert "fig3" in result.output


# ============ Report schema ============

@pytest.fixture(scope="module")
def validator():
    schema = export.load_schema()
    jsonschema.Draft202012Validator.check_schema(schema)
    return jsonschema.Draft202012Validator(schema)


def command_args(name, toy, toy_ds, tmp_path):
    if name == "audit":
        return ["audit", toy]
    if name == "audit-predictions":
        return ["audit", toy, "-p", str(write_predictions(tmp_path / "copies.csv", toy_ds.y))]
    if name == "audit-undefined":
        return ["audit", toy, "-p", str(write_predictions(tmp_path / "ones.csv", np.ones(300)))]
    if name == "train-eval":
        return ["train-eval", toy, "--family", "DT", "-P", "max_depth=3"]
    if name == "mitigate":
        return ["mitigate", toy, "--strategy", "positive-discrimination"]
    return ["bootstrap-compare", toy, "--seed", "1", "-B", "100", "-B", "120"]


@pytest.mark.parametrize(
    "name", ["audit", "audit-predictions", "audit-undefined", "train-eval", "mitigate", "bootstrap"]
)
def test_command_reports_match_the_schema(name, toy, toy_ds, tmp_path, validator):
    _, doc = run_json(command_args(name, toy, toy_ds, tmp_path), tmp_path / f"{name}.json")
    assert doc is not None
    validator.validate(doc)


def test_experiment_report_matches_the_schema(toy, tmp_path, validator):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps([
        {"name": "pd", "dataset": toy, "family": "LR", "strategy": "positive-discrimination", "k": 2},
        {"name": "gone", "dataset": "mystery", "k": 2},
    ]))
    runner.invoke(app, ["experiment", str(suite), "--seed", "3", "-o", str(tmp_path / "out")])
    doc = json.loads((tmp_path / "out" / "suite.json").read_text())
    assert [r["error"] is None for r in doc["reports"]] == [True, False]
    validator.validate(doc)


def test_schema_rejects_estimates_missing_a_field(toy, tmp_path, validator):
    _, doc = run_json(["audit", toy], tmp_path / "audit.json")
    del doc["estimates"]["di_data"]["method"]
    with pytest.raises(jsonschema.ValidationError):
        validator.validate(doc)


# ============ Entry point ============

@pytest.mark.parametrize("argv", [["audit"], ["audit", "x", "--no-such-flag"], ["experiment", "fig3"]])
def test_usage_errors_exit_1(monkeypatch, argv):
    monkeypatch.setattr(sys, "argv", ["faircheck", *argv])
    with pytest.raises(SystemExit) as exc:
        main()
    assert exc.value.code == 1


def test_main_passes_exit_codes_through(monkeypatch, toy, tmp_path):
    monkeypatch.setattr(sys, "argv", ["faircheck", "audit", toy, "-f", "json", "-o", str(tmp_path / "a.json")])
    with pytest.raises(SystemExit) as exc:
        main()
    assert exc.value.code == 0

    preds = write_predictions(tmp_path / "preds.csv", np.ones(300))
    monkeypatch.setattr(sys, "argv", ["faircheck", "audit", toy, "-p", str(preds), "-f", "json"])
    with pytest.raises(SystemExit) as exc:
        main()
    assert exc.value.code == 2


# ============ Adult reproduction ============

needs_adult = needs_data("adult.csv")


@pytest.mark.data
@needs_adult
@pytest.mark.parametrize("sensitive,point,lower,upper", [
    ("gender", 0.3597, 0.3428, 0.3765),
    ("ethnic", 0.6006, 0.5662, 0.6350),
])
def test_adult_data_di(tmp_path, sensitive, point, lower, upper):
    code, doc = run_json(["audit", "adult", "-s", sensitive], tmp_path / "adult.json")
    assert code == 0
    di = doc["estimates"]["di_data"]
    assert di["point"] == pytest.approx(point, abs=0.01)
    assert di["lower"] == pytest.approx(lower, abs=0.01)
    assert di["upper"] == pytest.approx(upper, abs=0.01)


@pytest.mark.data
@pytest.mark.slow
@needs_adult
def test_adult_bootstrap_agrees_with_delta_method(tmp_path):
    code, doc = run_json(["bootstrap-compare", "adult", "--seed", "0", "-B", "1000"], tmp_path / "boot.json")
    assert code == 0
    (comparison,) = doc["comparisons"]
    assert comparison["lower_diff"] <= 0.005
    assert comparison["upper_diff"] <= 0.005


# ============ German Credit and COMPAS ============

@pytest.mark.data
@needs_data("german.data")
def test_german_credit_origin_di(tmp_path):
    code, doc = run_json(["audit", "german"], tmp_path / "german.json")
    assert code == 0
    di = doc["estimates"]["di_data"]
    assert di["point"] == pytest.approx(0.77, abs=0.02)
    assert di["lower"] == pytest.approx(0.68, abs=0.02)
    assert di["upper"] == pytest.approx(0.87, abs=0.02)
    # not significantly above or below 0.8
    assert [t["reject"] for t in doc["tests"]] == [False, False]


def compas_score_decisions(path):
    """Favourable decision wherever the COMPAS risk score is Low, row-aligned with the dataset."""
    table = recipes.load_table(recipes.load_config("compas"))
    decisions = (table.frame["score_text"] == "Low").astype(int)
    return write_predictions(path, decisions)


@pytest.mark.data
@needs_data("compas.csv")
def test_compas_audit(tmp_path):
    preds = compas_score_decisions(tmp_path / "score.csv")
    code, doc = run_json(["audit", "compas", "-p", str(preds)], tmp_path / "compas.json")
    assert code == 0
    expected = {
        "di_data": (0.76, 0.72, 0.81),
        "di_classifier": (0.71, 0.68, 0.74),
        "tp_ratio": (0.6, 0.54, 0.65),
        "tn_ratio": (3.38, 2.46, 4.3),
    }
    for name, (point, lower, upper) in expected.items():
        est = doc["estimates"][name]
        assert est["point"] == pytest.approx(point, abs=0.02), name
        assert est["lower"] == pytest.approx(lower, abs=0.02), name
        assert est["upper"] == pytest.approx(upper, abs=0.02), name
