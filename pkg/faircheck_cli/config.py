"""Configuration, defaults and paths for faircheck."""

import os
from pathlib import Path

# Config directory - holds dataset configs and the CSV files they point to.
# FAIRCHECK_CONFIG_DIR overrides the user-global default.
CONFIG_DIR_ENV = "FAIRCHECK_CONFIG_DIR"
DEFAULT_CONFIG_DIR = Path.home() / ".faircheck"


def config_dir() -> Path:
    """Directory searched for dataset configs and built-in dataset files."""
    override = os.environ.get(CONFIG_DIR_ENV)
    return Path(override).expanduser() if override else DEFAULT_CONFIG_DIR


# Missing value markers in raw CSV files
MISSING_MARKERS = ("?", "")

# Inference defaults
CONFIDENCE_LEVEL = 0.95
SIGNIFICANCE = 0.05
DI_LEVEL = 0.8  # the 4/5 rule
BOOTSTRAP_REPLICATES = 1000
BOOTSTRAP_MIN_REPLICATES = 100
BOOTSTRAP_MAX_UNDEFINED = 0.10  # fraction of replicates allowed to be undefined

# Mitigation defaults
TARGET_DI = 0.8
DEFAULT_THRESHOLD = 0.5

# Cross-validation
N_FOLDS = 10

# Logistic regression (full-batch Newton with backtracking)
LR_L2_PENALTY = 1e-4
LR_MAX_EPOCHS = 100
LR_LEARNING_RATE = 1.0
LR_TOLERANCE = 1e-8

# CART tree
TREE_MAX_DEPTH = 5
TREE_MIN_SAMPLES_LEAF = 1

# Gradient boosting
GBM_ROUNDS = 100
GBM_DEPTH = 3
GBM_SHRINKAGE = 0.1

# Serialization
MODEL_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1

# Decimals in human-readable output; JSON and CSV keep full precision
HUMAN_DECIMALS = 4
