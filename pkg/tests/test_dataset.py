"""Loading, preprocessing, encoding and splitting."""

import logging

import numpy as np
import pytest

from faircheck_cli import recipes
from faircheck_cli.dataset import (
    CATEGORICAL,
    CONTINUOUS,
    DeriveBinary,
    DropColumn,
    LabelSpec,
    MergeCategories,
    PreprocessSpec,
    SensitiveSpec,
    TableSchema,
    apply_preprocess,
    balanced_subsample,
    decode_one_hot,
    encode,
    equalized_group_sizes,
    holdout_split,
    kfold,
    load_csv,
    transform_from_dict,
)
from faircheck_cli.errors import ArgumentError, ConfigError, ParseError, SpecError
from faircheck_cli.metrics import count_groups, disparate_impact

from conftest import synthetic_dataset

SMALL_CSV = """\
age,color,flag,sex,label
30,red,yes,F,pos
40,green,no,M,neg
50,blue,no,M,pos
20,red,yes,F,neg
35,green,yes,M,pos
45,blue,no,F,neg
"""

SMALL_SCHEMA = TableSchema.from_mapping(
    {"age": CONTINUOUS, "color": CATEGORICAL, "flag": CATEGORICAL, "sex": CATEGORICAL, "label": CATEGORICAL}
)


@pytest.fixture
def small_table(tmp_path):
    path = tmp_path / "small.csv"
    path.write_text(SMALL_CSV)
    return load_csv(path, SMALL_SCHEMA)


# ============ load_csv ============

def test_load_csv_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_csv(tmp_path / "nope.csv", SMALL_SCHEMA)


def test_load_csv_reports_short_row_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,x\n2\n")
    schema = TableSchema.from_mapping({"a": CONTINUOUS, "b": CATEGORICAL})
    with pytest.raises(ParseError) as exc:
        load_csv(path, schema)
    assert exc.value.line == 3


def test_load_csv_rejects_text_in_continuous_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,x\nfoo,y\n")
    schema = TableSchema.from_mapping({"a": CONTINUOUS, "b": CATEGORICAL})
    with pytest.raises(ParseError, match="foo") as exc:
        load_csv(path, schema)
    assert exc.value.line == 3


def test_load_csv_marks_missing_values(tmp_path):
    path = tmp_path / "missing.csv"
    path.write_text("a,b\n?,x\n3,?\n")
    table = load_csv(path, TableSchema.from_mapping({"a": CONTINUOUS, "b": CATEGORICAL}))
    assert np.isnan(table.frame["a"][0])
    assert table.frame["a"][1] == 3.0
    assert table.frame["b"][0] == "x"
    assert table.frame["b"][1] is None


def test_load_csv_header_must_match_schema(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,x\n")
    with pytest.raises(ConfigError, match="not in"):
        load_csv(path, TableSchema.from_mapping({"a": CONTINUOUS, "c": CATEGORICAL}))


def test_unknown_column_kind():
    with pytest.raises(ConfigError, match="unknown kind"):
        TableSchema.from_mapping({"a": "ordinal"})


# ============ Preprocessing ============

def test_transform_on_absent_column_names_its_index(small_table):
    spec = PreprocessSpec((DropColumn("age"), DropColumn("height")))
    with pytest.raises(SpecError) as exc:
        apply_preprocess(small_table, spec)
    assert exc.value.index == 1


def test_derive_binary_needs_categorical_source(small_table):
    with pytest.raises(SpecError, match="categorical"):
        apply_preprocess(small_table, PreprocessSpec((DeriveBinary("old", "age", ("50",)),)))


def test_derive_binary_inserts_after_source(small_table):
    out = apply_preprocess(small_table, PreprocessSpec((DeriveBinary("warm", "color", ("red",)),)))
    assert out.names == ["age", "color", "warm", "flag", "sex", "label"]
    assert list(out.frame["warm"]) == ["Yes", "No", "No", "Yes", "No", "No"]
    assert out.n_rows == small_table.n_rows


def test_merge_categories_keeps_unmapped_values(small_table):
    out = apply_preprocess(small_table, PreprocessSpec((MergeCategories("color", {"green": "blue"}),)))
    assert list(out.frame["color"]) == ["red", "blue", "blue", "red", "blue", "blue"]


def test_transform_from_dict():
    transform = transform_from_dict({"op": "binarize", "column": "race", "positive_values": ["White"]})
    assert transform.positive_values == ("White",)
    with pytest.raises(ConfigError, match="Unknown transform"):
        transform_from_dict({"op": "explode"})
    with pytest.raises(ConfigError, match="Bad arguments"):
        transform_from_dict({"op": "drop_column", "column": "x"})


# ============ Encoding ============

def test_encode_layout(small_table):
    ds = encode(small_table, LabelSpec("label", "pos"), SensitiveSpec("sex", "F"))
    assert ds.feature_names == ("age", "color=blue", "color=green", "color=red", "flag=yes", "sex")
    assert ds.continuous_mask.tolist() == [True, False, False, False, False, False]
    assert ds.sensitive_feature_indices == (5,)
    assert ds.s.tolist() == [0, 1, 1, 0, 1, 0]
    assert ds.y.tolist() == [1, 0, 1, 0, 1, 0]
    np.testing.assert_array_equal(ds.X[:, 5], ds.s)
    assert not ds.groups_swapped


def test_one_hot_blocks_decode_to_original(small_table):
    ds = encode(small_table, LabelSpec("label", "pos"), SensitiveSpec("sex", "F"))
    block = ds.X[:, [j for j, o in enumerate(ds.feature_origins) if o == "color"]]
    np.testing.assert_array_equal(block.sum(axis=1), np.ones(ds.n))
    assert decode_one_hot(ds, "color") == list(small_table.frame["color"])
    assert decode_one_hot(ds, "flag") == list(small_table.frame["flag"])
    with pytest.raises(ArgumentError):
        decode_one_hot(ds, "age")


def test_encode_rejects_three_label_values(small_table):
    with pytest.raises(ConfigError, match="3 values"):
        encode(small_table, LabelSpec("color", "red"), SensitiveSpec("sex", "F"))


def test_encode_rejects_unknown_protected_value(small_table):
    with pytest.raises(ConfigError, match="Protected value"):
        encode(small_table, LabelSpec("label", "pos"), SensitiveSpec("sex", "X"))


def test_without_features_remaps_sensitive_index(synthetic):
    reduced = synthetic.without_features([0])
    assert reduced.d == synthetic.d - 1
    assert reduced.sensitive_feature_indices == (0,)
    assert synthetic.without_features([1]).sensitive_feature_indices == ()


# ============ Adult recipe ============

def test_adult_recipe_cleans_rows(adult_dir):
    cfg = recipes.load_config("adult")
    table = recipes.load_table(cfg)
    assert table.names == [
        "age", "workClass", "educNum", "mariStat", "occup", "child", "origEthn",
        "gender", "capitalGain", "capitalLoss", "hoursWeek", "income",
    ]
    assert table.n_rows == 5
    assert set(table.frame["income"]) == {"<=50K", ">50K"}
    assert set(table.frame["origEthn"]) == {"CaucYes", "CaucNo"}
    assert list(table.frame["child"]) == ["Yes", "No", "No", "No", "No"]


def test_adult_recipe_steps():
    steps = recipes.adult_recipe().to_list()
    assert {"op": "drop_column", "name": "education"} in steps
    dropped = [s["name"] for s in steps if s["op"] == "drop_column"]
    assert sorted(dropped) == ["education", "fnlwgt", "nativCountry", "relationship"]
    ops = [s["op"] for s in steps]
    assert ops.index("derive_binary") < steps.index({"op": "drop_column", "name": "relationship"})
    assert len(recipes.adult_recipe(drop_missing=False)) == len(recipes.adult_recipe()) - 1


def test_adult_recipe_cannot_run_twice(adult_dir):
    cleaned = recipes.load_table(recipes.load_config("adult"))
    with pytest.raises(SpecError) as exc:
        apply_preprocess(cleaned, recipes.adult_recipe())
    assert exc.value.index == 2  # drop_column("fnlwgt")


def test_empty_preprocess_is_identity(small_table):
    out = apply_preprocess(small_table, PreprocessSpec())
    assert out.names == small_table.names
    assert out.frame.equals(small_table.frame)


def test_adult_gender_di(adult_dir):
    cfg = recipes.load_config("adult")
    ds = recipes.load_dataset(cfg, "gender")
    assert ds.n == 5
    assert not {"fnlwgt", "relationship", "nativCountry", "education"} & set(ds.feature_origins)
    assert disparate_impact(count_groups(ds.y, ds.s)).value == pytest.approx(2 / 3)


def test_adult_full_keeps_incomplete_rows(adult_dir):
    ds = recipes.load_dataset(recipes.load_config("adult-full"), "gender")
    assert ds.n == 6
    assert "<missing>" in ds.categories["workClass"]
    assert disparate_impact(count_groups(ds.y, ds.s)).value == pytest.approx(1.0)


def test_groups_swap_when_protected_group_is_favoured(adult_dir, caplog):
    with caplog.at_level(logging.WARNING, logger="faircheck_cli"):
        ds = recipes.load_dataset(recipes.load_config("adult"), "ethnic")
    assert ds.groups_swapped
    assert "swapping" in caplog.text
    assert disparate_impact(count_groups(ds.y, ds.s)).value == pytest.approx(2 / 3)


GERMAN_ROW = "A11 6 A34 A43 1169 A65 A75 4 A93 A101 4 A121 67 A143 A152 2 A173 1 A192 {worker} {credit}"


def test_german_origin_protects_foreign_workers(config_dir):
    # attribute 20: A201 foreign worker, A202 not
    rows = [("A201", 1), ("A201", 2), ("A201", 2), ("A202", 1), ("A202", 1)]
    lines = [GERMAN_ROW.format(worker=w, credit=c) for w, c in rows]
    (config_dir / "german.data").write_text("\n".join(lines) + "\n", encoding="utf-8")
    ds = recipes.load_dataset(recipes.load_config("german"))
    assert not ds.groups_swapped
    assert ds.s.tolist() == [0, 0, 0, 1, 1]
    assert ds.y.tolist() == [1, 0, 0, 1, 1]
    assert disparate_impact(count_groups(ds.y, ds.s)).value == pytest.approx(1 / 3)


# ============ Config files ============

def test_config_file_by_name_in_config_dir(toy_config):
    cfg = recipes.load_config("toy.toml")
    assert cfg.name == "toy"
    ds = recipes.load_dataset(cfg)
    assert ds.n == 300
    assert ds.feature_names == ("age", "job=clerk", "job=driver", "job=manager", "sex")


def test_unknown_dataset_config(config_dir):
    with pytest.raises(ConfigError, match="built-in configs"):
        recipes.load_config("mystery")


def test_unknown_sensitive_attribute(toy_config):
    cfg = recipes.load_config(str(toy_config))
    with pytest.raises(ConfigError, match="Unknown sensitive attribute"):
        cfg.sensitive_spec("age")


def test_parse_config_validation(config_dir):
    with pytest.raises(ConfigError, match="missing required key"):
        recipes.parse_config({"columns": {"a": "continuous"}})
    raw = {
        "columns": {"a": "categorical"},
        "label": {"column": "a", "positive": "x"},
        "sensitive": {"s": {"column": "a", "protected": "y"}},
        "recipe": "adult",
        "preprocess": [],
    }
    with pytest.raises(ConfigError, match="not both"):
        recipes.parse_config(raw)
    with pytest.raises(ConfigError, match="Unknown recipe"):
        recipes.parse_config({**{k: v for k, v in raw.items() if k != "preprocess"}, "recipe": "german"})


# ============ Splits ============

def test_kfold_is_a_partition():
    plan = kfold(103, 10, seed=5)
    seen = np.concatenate([plan.test_indices(f) for f in range(10)])
    assert sorted(seen.tolist()) == list(range(103))
    assert max(plan.sizes()) - min(plan.sizes()) <= 1
    for f in range(10):
        assert not set(plan.test_indices(f)) & set(plan.train_indices(f))


def test_kfold_depends_only_on_seed():
    np.testing.assert_array_equal(kfold(50, 5, 1).assignments, kfold(50, 5, 1).assignments)
    assert not np.array_equal(kfold(50, 5, 1).assignments, kfold(50, 5, 2).assignments)


@pytest.mark.parametrize("k,n", [(1, 10), (11, 10)])
def test_kfold_rejects_bad_k(k, n):
    with pytest.raises(ArgumentError):
        kfold(n, k, 0)


def test_holdout_split():
    train, test = holdout_split(100, 0.3, seed=0)
    assert len(test) == 30 and len(train) == 70
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(100))
    with pytest.raises(ArgumentError):
        holdout_split(100, 1.0, seed=0)
    with pytest.raises(ArgumentError):
        holdout_split(1, 0.3, seed=0)


def test_balanced_subsample():
    ds = synthetic_dataset(n=500, seed=3)
    sizes = equalized_group_sizes(ds)
    balanced = balanced_subsample(ds, sizes, seed=11)
    n0, n1 = len(balanced.group_rows(0)), len(balanced.group_rows(1))
    assert n0 == n1 == min(len(ds.group_rows(0)), len(ds.group_rows(1)))
    again = balanced_subsample(ds, sizes, seed=11)
    np.testing.assert_array_equal(balanced.X, again.X)
    with pytest.raises(ArgumentError):
        balanced_subsample(ds, {0: ds.n + 1}, seed=0)
