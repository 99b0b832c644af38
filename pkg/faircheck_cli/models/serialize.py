"""Versioned JSON documents for trained scorers."""

import json
from pathlib import Path

import numpy as np

from ..config import MODEL_FORMAT_VERSION
from ..errors import ConfigError
from .base import ConstantScorer, Scorer
from .boosting import GBMParams, GBMScorer
from .logistic import LRParams, LogisticScorer
from .tree import TreeArrays, TreeParams, TreeScorer

DOCUMENT_FORMAT = "faircheck-model"


def scorer_from_dict(doc: dict) -> Scorer:
    """Rebuild a scorer from its ``to_dict()`` form."""
    family = doc.get("family")
    training = doc.get("training", {})
    try:
        if family == "logistic":
            return LogisticScorer(
                intercept=float(doc["intercept"]),
                coef=np.asarray(doc["coef"], dtype=float),
                center=np.asarray(doc["center"], dtype=float),
                scale=np.asarray(doc["scale"], dtype=float),
                params=LRParams(**doc["params"]),
                losses=tuple(training.get("losses", ())),
                seed=int(training.get("seed", 0)),
            )
        if family == "tree":
            return TreeScorer(tree=TreeArrays.from_dict(doc["tree"]), params=TreeParams(**doc["params"]))
        if family == "gbm":
            return GBMScorer(
                base_score=float(doc["base_score"]),
                trees=tuple(TreeArrays.from_dict(t) for t in doc["trees"]),
                steps=tuple(float(v) for v in doc["steps"]),
                params=GBMParams(**doc["params"]),
                losses=tuple(training.get("losses", ())),
                seed=int(training.get("seed", 0)),
            )
        if family == "constant":
            return ConstantScorer(float(doc["value"]))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Malformed '{family}' model document: {e}") from e
    raise ConfigError(f"Unknown model family '{family}'")


def wrap(body: dict, kind: str) -> dict:
    """Add the format tag and version to a model body."""
    return {"format": DOCUMENT_FORMAT, "version": MODEL_FORMAT_VERSION, "kind": kind, "model": body}


def unwrap(doc: dict) -> tuple[str, dict]:
    """Check the format tag and version, return ``(kind, body)``."""
    if not isinstance(doc, dict) or doc.get("format") != DOCUMENT_FORMAT:
        raise ConfigError("Not a faircheck model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ConfigError(
            f"Unsupported model document version {doc.get('version')} (expected {MODEL_FORMAT_VERSION})"
        )
    return doc.get("kind", "scorer"), doc["model"]


def save_document(doc: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_document(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Model file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Cannot parse model file {path}: {e}") from e


def save_scorer(scorer: Scorer, path: Path) -> None:
    save_document(wrap(scorer.to_dict(), "scorer"), path)


def load_scorer(path: Path) -> Scorer:
    kind, body = unwrap(load_document(path))
    if kind != "scorer":
        raise ConfigError(f"{path} holds a '{kind}' document, not a scorer")
    return scorer_from_dict(body)
