"""Dataset configs: the built-in Adult/German/COMPAS configs and file-based ones."""

import json
import logging
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from . import dataset
from .config import MISSING_MARKERS, config_dir
from .dataset import (
    Binarize,
    DeriveBinary,
    DropColumn,
    DropRowsWithMissing,
    EncodedDataset,
    LabelSpec,
    NormalizeLabel,
    PreprocessSpec,
    RawTable,
    SensitiveSpec,
    TableSchema,
)
from .errors import ConfigError

logger = logging.getLogger(__name__)

# Adult recipe constants
ADULT_CHILD_RELATIONSHIPS = ("Own-child",)
ADULT_CAUCASIAN = ("White",)
ADULT_INCOME_SPELLINGS = {
    "<50K": "<=50K",
    "<=50K": "<=50K",
    "≤50K": "<=50K",
    "<=50K.": "<=50K",
    "<50K.": "<=50K",
    ">50K": ">50K",
    ">=50K": ">50K",
    "≥50K": ">50K",
    ">50K.": ">50K",
    ">=50K.": ">50K",
}

ADULT_COLUMNS = {
    "age": "continuous",
    "workClass": "categorical",
    "fnlwgt": "continuous",
    "education": "categorical",
    "educNum": "continuous",
    "mariStat": "categorical",
    "occup": "categorical",
    "relationship": "categorical",
    "origEthn": "categorical",
    "gender": "categorical",
    "capitalGain": "continuous",
    "capitalLoss": "continuous",
    "hoursWeek": "continuous",
    "nativCountry": "categorical",
    "income": "categorical",
}


def adult_recipe(drop_missing: bool = True) -> PreprocessSpec:
    """The fixed Adult cleanup.

    Label spellings are unified, incomplete rows deleted, ``child`` derived from
    ``relationship`` before that column goes, redundant columns dropped and the
    ethnic origin collapsed to CaucYes/CaucNo.
    """
    transforms = [NormalizeLabel("income", ADULT_INCOME_SPELLINGS)]
    if drop_missing:
        transforms.append(DropRowsWithMissing())
    transforms += [
        DropColumn("fnlwgt"),
        DeriveBinary("child", "relationship", ADULT_CHILD_RELATIONSHIPS),
        DropColumn("relationship"),
        DropColumn("nativCountry"),
        Binarize("origEthn", ADULT_CAUCASIAN, positive_label="CaucYes", negative_label="CaucNo"),
        DropColumn("education"),
    ]
    return PreprocessSpec(tuple(transforms))


RECIPES = {
    "adult": lambda: adult_recipe(drop_missing=True),
    "adult-full": lambda: adult_recipe(drop_missing=False),
}


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to turn a CSV file into an EncodedDataset."""
    name: str
    path: Path
    schema: TableSchema
    label: LabelSpec
    sensitive: Mapping[str, SensitiveSpec]
    default_sensitive: str
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)

    def sensitive_spec(self, attribute: Optional[str] = None) -> SensitiveSpec:
        key = attribute or self.default_sensitive
        if key not in self.sensitive:
            raise ConfigError(
                f"Unknown sensitive attribute '{key}' for dataset '{self.name}', "
                f"expected one of {sorted(self.sensitive)}"
            )
        return self.sensitive[key]


def _builtin_adult(name: str) -> dict:
    return {
        "name": name,
        "path": "adult.csv",
        "header": False,
        "columns": ADULT_COLUMNS,
        "label": {"column": "income", "positive": ">50K"},
        "sensitive": {
            "gender": {"column": "gender", "protected": "Female"},
            "ethnic": {"column": "origEthn", "protected": "CaucNo"},
        },
        "default_sensitive": "gender",
        "recipe": name,
    }


# German Credit (UCI german.data, space separated, attribute codes as published)
GERMAN_COLUMNS = {
    "status": "categorical",
    "duration": "continuous",
    "history": "categorical",
    "purpose": "categorical",
    "amount": "continuous",
    "savings": "categorical",
    "employment": "categorical",
    "installment_rate": "continuous",
    "personal_status": "categorical",
    "debtors": "categorical",
    "residence": "continuous",
    "property": "categorical",
    "age": "continuous",
    "other_plans": "categorical",
    "housing": "categorical",
    "existing_credits": "continuous",
    "job": "categorical",
    "liable": "continuous",
    "telephone": "categorical",
    "foreign_worker": "categorical",
    "credit": "categorical",
}

COMPAS_COLUMNS = {
    "sex": "categorical",
    "age": "continuous",
    "race": "categorical",
    "priors_count": "continuous",
    "c_charge_degree": "categorical",
    "score_text": "categorical",
    "two_year_recid": "categorical",
}

BUILTIN_CONFIGS = {
    "adult": _builtin_adult("adult"),
    "adult-full": _builtin_adult("adult-full"),
    "german": {
        "name": "german",
        "path": "german.data",
        "header": False,
        "delimiter": " ",
        "columns": GERMAN_COLUMNS,
        "label": {"column": "credit", "positive": "1"},
        # A201 = foreign worker (protected), A202 = not a foreign worker
        "sensitive": {"origin": {"column": "foreign_worker", "protected": "A201"}},
        "default_sensitive": "origin",
    },
    "compas": {
        "name": "compas",
        "path": "compas.csv",
        "header": True,
        "columns": COMPAS_COLUMNS,
        # Favourable outcome: no recidivism within two years
        "label": {"column": "two_year_recid", "positive": "0"},
        "sensitive": {"race": {"column": "race", "protected": "Non-Caucasian"}},
        "default_sensitive": "race",
        "preprocess": [
            {
                "op": "binarize",
                "column": "race",
                "positive_values": ["Caucasian"],
                "positive_label": "Caucasian",
                "negative_label": "Non-Caucasian",
            },
        ],
    },
}


def parse_config(raw: Mapping[str, Any], base_dir: Optional[Path] = None) -> DatasetConfig:
    """Build a DatasetConfig from a parsed TOML/JSON mapping."""
    try:
        name = raw.get("name", "dataset")
        columns = raw["columns"]
        label = LabelSpec(**raw["label"])
        sensitive = {key: SensitiveSpec(**value) for key, value in raw["sensitive"].items()}
    except KeyError as e:
        raise ConfigError(f"Dataset config is missing required key {e}") from e
    except TypeError as e:
        raise ConfigError(f"Bad label/sensitive entry in dataset config: {e}") from e
    if not sensitive:
        raise ConfigError("Dataset config declares no sensitive attribute")

    default_sensitive = raw.get("default_sensitive", next(iter(sensitive)))
    schema = TableSchema.from_mapping(
        columns,
        header=bool(raw.get("header", True)),
        delimiter=raw.get("delimiter", ","),
        missing_markers=tuple(raw.get("missing_markers", MISSING_MARKERS)),
        skip_rows=int(raw.get("skip_rows", 0)),
    )

    if "recipe" in raw and "preprocess" in raw:
        raise ConfigError("Use either 'recipe' or 'preprocess', not both")
    if "recipe" in raw:
        if raw["recipe"] not in RECIPES:
            raise ConfigError(f"Unknown recipe '{raw['recipe']}', expected one of {sorted(RECIPES)}")
        preprocess = RECIPES[raw["recipe"]]()
    else:
        preprocess = PreprocessSpec(tuple(dataset.transform_from_dict(t) for t in raw.get("preprocess", [])))

    path = Path(raw.get("path", f"{name}.csv")).expanduser()
    if not path.is_absolute():
        candidates = [base_dir / path] if base_dir else []
        candidates.append(config_dir() / path)
        path = next((p for p in candidates if p.exists()), candidates[0])

    return DatasetConfig(
        name=name,
        path=path,
        schema=schema,
        label=label,
        sensitive=sensitive,
        default_sensitive=default_sensitive,
        preprocess=preprocess,
    )


def load_config(ref: str) -> DatasetConfig:
    """Resolve a built-in name, or read a .toml/.json dataset config file.

    Relative file names are also looked up in the config directory.
    """
    if ref in BUILTIN_CONFIGS:
        return parse_config(BUILTIN_CONFIGS[ref], base_dir=config_dir())

    path = Path(ref).expanduser()
    if not path.exists() and not path.is_absolute():
        path = config_dir() / path
    if not path.exists():
        raise ConfigError(
            f"Dataset config not found: {ref} (built-in configs: {', '.join(sorted(BUILTIN_CONFIGS))})"
        )

    try:
        if path.suffix == ".toml":
            with path.open("rb") as f:
                raw = tomllib.load(f)
        elif path.suffix == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            raise ConfigError(f"Dataset config must be .toml or .json: {path}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e

    return parse_config(raw, base_dir=path.parent)


def load_table(cfg: DatasetConfig) -> RawTable:
    """Read and preprocess the config's CSV file."""
    table = dataset.load_csv(cfg.path, cfg.schema)
    return dataset.apply_preprocess(table, cfg.preprocess)


def load_dataset(cfg: DatasetConfig, sensitive: Optional[str] = None) -> EncodedDataset:
    """Read, preprocess and encode the config's dataset for one sensitive attribute."""
    table = load_table(cfg)
    logger.info("Dataset '%s': %d rows after preprocessing", cfg.name, table.n_rows)
    return dataset.encode(table, cfg.label, cfg.sensitive_spec(sensitive))
