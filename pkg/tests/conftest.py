"""Shared fixtures: synthetic encoded datasets and a throwaway config directory."""

import numpy as np
import pytest
from scipy.special import expit

from faircheck_cli import config
from faircheck_cli.dataset import EncodedDataset

ADULT_ROWS = [
    "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Own-child, White, Male, 2174, 0, 40, United-States, <=50K",
    "50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, >50K.",
    "38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, Black, Female, 0, 0, 40, United-States, <=50K.",
    "53, ?, 234721, 11th, 7, Married-civ-spouse, ?, Husband, Black, Male, 0, 0, 40, United-States, <=50K",
    "28, Private, 338409, Bachelors, 13, Married-civ-spouse, Prof-specialty, Wife, Black, Female, 0, 0, 40, Cuba, >50K",
    "37, Private, 284582, Masters, 14, Married-civ-spouse, Exec-managerial, Wife, White, Female, 0, 0, 40, United-States, <=50K",
]

TOY_CONFIG = """\
name = "toy"
path = "toy.csv"
header = true
default_sensitive = "sex"
label = {column = "income", positive = "high"}

[columns]
age = "continuous"
job = "categorical"
sex = "categorical"
income = "categorical"

[sensitive.sex]
column = "sex"
protected = "Female"
"""


def synthetic_dataset(n: int = 400, seed: int = 0, signal: float = 3.0, bias: float = 1.0) -> EncodedDataset:
    """Features (x0 continuous, S, x1 binary); S=1 has the higher positive rate."""
    rng = np.random.default_rng(seed)
    s = (rng.random(n) < 0.6).astype(np.int64)
    x0 = rng.normal(size=n)
    x1 = (rng.random(n) < 0.5).astype(float)
    logits = signal * x0 + 0.8 * x1 + bias * (s - 0.5)
    y = (rng.random(n) < expit(logits)).astype(np.int64)
    return EncodedDataset(
        X=np.column_stack([x0, s.astype(float), x1]),
        y=y,
        s=s,
        feature_names=("x0", "sex", "x1=Yes"),
        feature_origins=("x0", "sex", "x1"),
        continuous_mask=np.array([True, False, False]),
        sensitive_feature_indices=(1,),
        categories={"x1": ("No", "Yes")},
    )


def dataset_from_arrays(X, y, s, sensitive=()) -> EncodedDataset:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return EncodedDataset(
        X=X,
        y=np.asarray(y, dtype=np.int64),
        s=np.asarray(s, dtype=np.int64),
        feature_names=tuple(f"f{j}" for j in range(X.shape[1])),
        feature_origins=tuple(f"f{j}" for j in range(X.shape[1])),
        continuous_mask=np.zeros(X.shape[1], dtype=bool),
        sensitive_feature_indices=tuple(sensitive),
    )


@pytest.fixture
def synthetic():
    return synthetic_dataset()


@pytest.fixture
def config_dir(tmp_path, monkeypatch):
    """Empty config directory picked up through FAIRCHECK_CONFIG_DIR."""
    root = tmp_path / "configs"
    root.mkdir()
    monkeypatch.setenv("FAIRCHECK_CONFIG_DIR", str(root))
    return root


@pytest.fixture
def adult_dir(config_dir):
    """A few Adult-format rows as ``adult.csv`` in the config directory."""
    (config_dir / "adult.csv").write_text("\n".join(ADULT_ROWS) + "\n", encoding="utf-8")
    return config_dir


@pytest.fixture
def toy_config(config_dir):
    """``toy.toml`` + ``toy.csv``: 300 rows where women have the lower positive rate."""
    rng = np.random.default_rng(7)
    n = 300
    lines = ["age,job,sex,income"]
    for _ in range(n):
        female = rng.random() < 0.4
        age = int(rng.integers(18, 70))
        job = ("clerk", "manager", "driver")[int(rng.integers(0, 3))]
        logit = 0.06 * (age - 40) + (0.0 if female else 1.2) + (0.8 if job == "manager" else -0.4)
        high = rng.random() < expit(logit)
        lines.append(f"{age},{job},{'Female' if female else 'Male'},{'high' if high else 'low'}")
    (config_dir / "toy.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    path = config_dir / "toy.toml"
    path.write_text(TOY_CONFIG, encoding="utf-8")
    return path


def needs_data(filename: str):
    """Skip unless the user-supplied ``filename`` is in the config directory."""
    return pytest.mark.skipif(
        not (config.config_dir() / filename).exists(),
        reason=f"{filename} not in the config directory",
    )
