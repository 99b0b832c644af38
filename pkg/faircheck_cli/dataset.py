"""Raw table loading, declarative preprocessing, encoding and reproducible splits."""

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .config import MISSING_MARKERS
from .errors import ArgumentError, ConfigError, ParseError, SpecError

logger = logging.getLogger(__name__)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
COLUMN_KINDS = (CATEGORICAL, CONTINUOUS)

# Category used for a missing categorical feature value when rows are kept
MISSING_CATEGORY = "<missing>"


@dataclass(frozen=True)
class Column:
    """A named column and its kind."""
    name: str
    kind: str


@dataclass(frozen=True, eq=False)
class RawTable:
    """Parsed tabular data before encoding.

    Categorical columns hold strings, continuous columns floats. Missing values
    are ``None`` (categorical) or ``NaN`` (continuous).
    """
    columns: tuple[Column, ...]
    frame: pd.DataFrame

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError(f"Duplicate column names: {names}")
        if list(self.frame.columns) != names:
            raise ConfigError("Frame columns do not match the declared columns")

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def kind(self, name: str) -> str:
        for column in self.columns:
            if column.name == name:
                return column.kind
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def equals(self, other: "RawTable") -> bool:
        return self.columns == other.columns and self.frame.equals(other.frame)


@dataclass(frozen=True)
class TableSchema:
    """How to read a CSV file: column kinds in file order, header and missing markers."""
    columns: tuple[Column, ...]
    header: bool = True
    delimiter: str = ","
    missing_markers: tuple[str, ...] = MISSING_MARKERS
    skip_rows: int = 0

    @classmethod
    def from_mapping(cls, kinds: Mapping[str, str], **kwargs) -> "TableSchema":
        columns = []
        for name, kind in kinds.items():
            if kind not in COLUMN_KINDS:
                raise ConfigError(f"Column '{name}' has unknown kind '{kind}'")
            columns.append(Column(name, kind))
        return cls(columns=tuple(columns), **kwargs)


# ============ Loading ============

_LINE_RE = re.compile(r"line (\d+)")


def load_csv(path: Path, schema: TableSchema) -> RawTable:
    """Load a CSV file into a RawTable.

    Args:
        path: CSV file
        schema: Column kinds, header flag and missing markers

    Returns:
        RawTable with declared kinds and missing values recorded
    """
    path = Path(path).expanduser()
    if not path.exists():
        raise ConfigError(f"Data file not found: {path}")

    names = [c.name for c in schema.columns]
    first_data_line = schema.skip_rows + (2 if schema.header else 1)

    # The parser pads short rows silently, so check arity up front
    with path.open(newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f, delimiter=schema.delimiter), start=1):
            if lineno <= schema.skip_rows or not row or lineno == first_data_line - 1 and schema.header:
                continue
            if len(row) != len(names):
                raise ParseError(
                    f"expected {len(names)} fields in {path.name}, found {len(row)}", line=lineno
                )

    try:
        frame = pd.read_csv(
            path,
            sep=schema.delimiter,
            header=0 if schema.header else None,
            names=None if schema.header else names,
            skiprows=schema.skip_rows,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        match = _LINE_RE.search(str(e))
        line = int(match.group(1)) + schema.skip_rows if match else None
        raise ParseError(f"wrong number of fields in {path.name}", line=line) from e

    if schema.header:
        header = [str(c).strip() for c in frame.columns]
        unknown = [n for n in names if n not in header]
        if unknown:
            raise ConfigError(f"Schema columns not in {path.name}: {unknown}")
        undeclared = [h for h in header if h not in names]
        if undeclared:
            raise ConfigError(f"Columns of {path.name} missing from schema: {undeclared}")
        frame.columns = header
        frame = frame[names]

    markers = set(schema.missing_markers)
    data = {}
    for column in schema.columns:
        raw = frame[column.name].fillna("").str.strip()
        missing = raw.isin(markers).to_numpy()
        if column.kind == CATEGORICAL:
            values = pd.Series([None if m else v for v, m in zip(raw, missing)], dtype=object)
        else:
            values = pd.to_numeric(raw.where(~missing), errors="coerce")
            bad = values.isna().to_numpy() & ~missing
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise ParseError(
                    f"non-numeric value '{raw.iloc[row]}' in continuous column '{column.name}'",
                    line=first_data_line + row,
                )
            values = values.astype(float)
        data[column.name] = values.reset_index(drop=True)

    table = RawTable(columns=schema.columns, frame=pd.DataFrame(data, columns=names))
    logger.debug("Loaded %d rows x %d columns from %s", table.n_rows, len(names), path)
    return table


# ============ Preprocessing ============

@dataclass(frozen=True)
class DropColumn:
    name: str
    op = "drop_column"

    def requires(self) -> tuple[str, ...]:
        return (self.name,)

    def apply(self, table: RawTable) -> RawTable:
        columns = tuple(c for c in table.columns if c.name != self.name)
        return RawTable(columns, table.frame.drop(columns=[self.name]))


@dataclass(frozen=True)
class DropRowsWithMissing:
    op = "drop_rows_with_missing"

    def requires(self) -> tuple[str, ...]:
        return ()

    def apply(self, table: RawTable) -> RawTable:
        frame = table.frame.dropna(how="any").reset_index(drop=True)
        return RawTable(table.columns, frame)


@dataclass(frozen=True)
class MergeCategories:
    """Replace category values per ``mapping``; unmapped values are kept."""
    column: str
    mapping: Mapping[str, str]
    op = "merge_categories"

    def requires(self) -> tuple[str, ...]:
        return (self.column,)

    def apply(self, table: RawTable) -> RawTable:
        frame = table.frame.copy()
        frame[self.column] = frame[self.column].map(
            lambda v: self.mapping.get(v, v) if v is not None else None
        )
        return RawTable(table.columns, frame)


@dataclass(frozen=True)
class Binarize:
    """Collapse a categorical column into two categories, optionally renaming it."""
    column: str
    positive_values: tuple[str, ...]
    new_name: Optional[str] = None
    positive_label: str = "Yes"
    negative_label: str = "No"
    op = "binarize"

    def requires(self) -> tuple[str, ...]:
        return (self.column,)

    def apply(self, table: RawTable) -> RawTable:
        target = self.new_name or self.column
        positives = set(self.positive_values)
        values = table.frame[self.column].map(
            lambda v: None if v is None else (self.positive_label if v in positives else self.negative_label)
        )
        frame = table.frame.copy()
        frame[self.column] = values
        frame = frame.rename(columns={self.column: target})
        columns = tuple(
            Column(target, CATEGORICAL) if c.name == self.column else c for c in table.columns
        )
        return RawTable(columns, frame)


@dataclass(frozen=True)
class DeriveBinary:
    """Add a two-category column: ``positive_label`` iff the source value is in ``values``."""
    new_name: str
    source_column: str
    values: tuple[str, ...]
    positive_label: str = "Yes"
    negative_label: str = "No"
    op = "derive_binary"

    def requires(self) -> tuple[str, ...]:
        return (self.source_column,)

    def apply(self, table: RawTable) -> RawTable:
        members = set(self.values)
        derived = table.frame[self.source_column].map(
            lambda v: None if v is None else (self.positive_label if v in members else self.negative_label)
        )
        position = table.names.index(self.source_column) + 1
        frame = table.frame.copy()
        frame.insert(position, self.new_name, derived)
        columns = list(table.columns)
        columns.insert(position, Column(self.new_name, CATEGORICAL))
        return RawTable(tuple(columns), frame)


@dataclass(frozen=True)
class NormalizeLabel:
    """Map label spellings onto canonical values."""
    column: str
    mapping: Mapping[str, str]
    op = "normalize_label"

    def requires(self) -> tuple[str, ...]:
        return (self.column,)

    def apply(self, table: RawTable) -> RawTable:
        frame = table.frame.copy()
        frame[self.column] = frame[self.column].map(
            lambda v: self.mapping.get(v.strip(), v.strip()) if v is not None else None
        )
        return RawTable(table.columns, frame)


Transform = DropColumn | DropRowsWithMissing | MergeCategories | Binarize | DeriveBinary | NormalizeLabel


@dataclass(frozen=True)
class PreprocessSpec:
    """Ordered list of transforms applied by :func:`apply_preprocess`."""
    transforms: tuple[Transform, ...] = ()

    def __iter__(self) -> Iterator[Transform]:
        return iter(self.transforms)

    def __len__(self) -> int:
        return len(self.transforms)

    def to_list(self) -> list[dict]:
        return [transform_to_dict(t) for t in self.transforms]


def apply_preprocess(table: RawTable, spec: PreprocessSpec) -> RawTable:
    """Apply transforms in order. Only drop_rows_with_missing removes rows."""
    for index, transform in enumerate(spec):
        for name in transform.requires():
            if not table.has(name):
                raise SpecError(f"{transform.op} references absent column '{name}'", index)
        if isinstance(transform, DeriveBinary) and table.has(transform.new_name):
            raise SpecError(f"derive_binary target '{transform.new_name}' already exists", index)
        if isinstance(transform, Binarize) and transform.new_name and transform.new_name != transform.column \
                and table.has(transform.new_name):
            raise SpecError(f"binarize target '{transform.new_name}' already exists", index)
        if isinstance(transform, (Binarize, DeriveBinary, MergeCategories)):
            source = transform.source_column if isinstance(transform, DeriveBinary) else transform.column
            if table.kind(source) != CATEGORICAL:
                raise SpecError(f"{transform.op} needs a categorical column, '{source}' is continuous", index)
        before = table.n_rows
        table = transform.apply(table)
        logger.debug("%s: %d -> %d rows", transform.op, before, table.n_rows)
    return table


_TRANSFORM_TYPES = {
    "drop_column": DropColumn,
    "drop_rows_with_missing": DropRowsWithMissing,
    "merge_categories": MergeCategories,
    "binarize": Binarize,
    "derive_binary": DeriveBinary,
    "normalize_label": NormalizeLabel,
}


def transform_from_dict(entry: Mapping) -> Transform:
    """Build a transform from a config entry like ``{op = "drop_column", name = "fnlwgt"}``."""
    entry = dict(entry)
    op = entry.pop("op", None)
    if op not in _TRANSFORM_TYPES:
        raise ConfigError(f"Unknown transform op '{op}', expected one of {sorted(_TRANSFORM_TYPES)}")
    for key in ("positive_values", "values"):
        if key in entry:
            entry[key] = tuple(entry[key])
    try:
        return _TRANSFORM_TYPES[op](**entry)
    except TypeError as e:
        raise ConfigError(f"Bad arguments for transform '{op}': {e}") from e


def transform_to_dict(transform: Transform) -> dict:
    out = {"op": transform.op}
    for key, value in transform.__dict__.items():
        out[key] = list(value) if isinstance(value, tuple) else (dict(value) if isinstance(value, Mapping) else value)
    return out


# ============ Encoding ============

@dataclass(frozen=True)
class LabelSpec:
    column: str
    positive: str


@dataclass(frozen=True)
class SensitiveSpec:
    column: str
    protected: str


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    """Numeric design matrix with binary label ``y`` and binary group ``s``.

    ``s == 0`` is the protected (minority) group. ``feature_origins[j]`` is the
    raw column that produced feature ``j``; ``sensitive_feature_indices`` are the
    columns of ``X`` encoding S (empty once removed).
    """
    X: np.ndarray
    y: np.ndarray
    s: np.ndarray
    feature_names: tuple[str, ...]
    feature_origins: tuple[str, ...]
    continuous_mask: np.ndarray
    sensitive_feature_indices: tuple[int, ...] = ()
    categories: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    groups_swapped: bool = False

    def __post_init__(self):
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.s.shape != (n,):
            raise ArgumentError("X, y and s must have the same number of rows")
        if len(self.feature_names) != self.X.shape[1]:
            raise ArgumentError("feature_names must name every column of X")
        if any(i < 0 or i >= self.X.shape[1] for i in self.sensitive_feature_indices):
            raise ArgumentError("sensitive_feature_indices out of range")
        for array in (self.X, self.y, self.s, self.continuous_mask):
            array.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows: np.ndarray) -> "EncodedDataset":
        """Rows ``rows`` of this dataset, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, X=self.X[rows], y=self.y[rows], s=self.s[rows])

    def without_features(self, drop: Sequence[int]) -> "EncodedDataset":
        """Remove feature columns; sensitive indices are remapped or dropped."""
        drop_set = set(drop)
        keep = [j for j in range(self.d) if j not in drop_set]
        remap = {old: new for new, old in enumerate(keep)}
        return replace(
            self,
            X=self.X[:, keep],
            feature_names=tuple(self.feature_names[j] for j in keep),
            feature_origins=tuple(self.feature_origins[j] for j in keep),
            continuous_mask=self.continuous_mask[keep],
            sensitive_feature_indices=tuple(remap[j] for j in self.sensitive_feature_indices if j in remap),
        )

    def group_rows(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.s == group)


def _sorted_categories(values: pd.Series) -> list[str]:
    return sorted({v for v in values if v is not None})


def encode(table: RawTable, label: LabelSpec, sensitive: SensitiveSpec) -> EncodedDataset:
    """Encode a RawTable to numbers.

    Binary categoricals become one 0/1 column (1 = the later category in sorted
    order), multi-class categoricals a full one-hot block, continuous columns
    pass through. The sensitive column is encoded as a single column equal to s.

    If the protected group has the higher positive rate the groups are swapped
    (with a warning) so that S=0 always denotes the disadvantaged group.
    """
    for role, column in (("label", label.column), ("sensitive", sensitive.column)):
        if not table.has(column):
            raise ConfigError(f"{role} column '{column}' not in table")
        if table.kind(column) != CATEGORICAL:
            raise ConfigError(f"{role} column '{column}' must be categorical")
        if table.frame[column].isna().any():
            raise ConfigError(f"{role} column '{column}' has missing values")

    label_values = _sorted_categories(table.frame[label.column])
    if len(label_values) > 2:
        raise ConfigError(
            f"Label column '{label.column}' has {len(label_values)} values after normalization: {label_values}"
        )
    if table.n_rows and label.positive not in label_values:
        raise ConfigError(f"Positive label '{label.positive}' not found in '{label.column}'")
    sensitive_values = _sorted_categories(table.frame[sensitive.column])
    if table.n_rows and sensitive.protected not in sensitive_values:
        raise ConfigError(f"Protected value '{sensitive.protected}' not found in '{sensitive.column}'")

    y = (table.frame[label.column] == label.positive).to_numpy(dtype=np.int64)
    s = (table.frame[sensitive.column] != sensitive.protected).to_numpy(dtype=np.int64)

    swapped = False
    if (s == 0).any() and (s == 1).any():
        rate0 = y[s == 0].mean()
        rate1 = y[s == 1].mean()
        if rate0 > rate1:
            logger.warning(
                "Protected group '%s' has the higher positive rate (%.4f > %.4f); swapping groups",
                sensitive.protected, rate0, rate1,
            )
            s = 1 - s
            swapped = True

    blocks: list[np.ndarray] = []
    names: list[str] = []
    origins: list[str] = []
    continuous: list[bool] = []
    categories: dict[str, tuple[str, ...]] = {}
    sensitive_index: Optional[int] = None

    for column in table.columns:
        if column.name == label.column:
            continue
        values = table.frame[column.name]
        if column.name == sensitive.column:
            sensitive_index = len(names)
            blocks.append(s.astype(float)[:, None])
            names.append(column.name)
            origins.append(column.name)
            continuous.append(False)
            continue
        if column.kind == CONTINUOUS:
            if values.isna().any():
                raise ConfigError(f"Continuous column '{column.name}' has missing values")
            blocks.append(values.to_numpy(dtype=float)[:, None])
            names.append(column.name)
            origins.append(column.name)
            continuous.append(True)
            continue
        filled = values.map(lambda v: MISSING_CATEGORY if v is None else v)
        cats = tuple(_sorted_categories(filled))
        categories[column.name] = cats
        if len(cats) == 2:
            blocks.append((filled == cats[1]).to_numpy(dtype=float)[:, None])
            names.append(f"{column.name}={cats[1]}")
            origins.append(column.name)
            continuous.append(False)
        else:
            codes = filled.map({c: i for i, c in enumerate(cats)}).to_numpy(dtype=np.int64)
            onehot = np.zeros((table.n_rows, len(cats)))
            onehot[np.arange(table.n_rows), codes] = 1.0
            blocks.append(onehot)
            names.extend(f"{column.name}={c}" for c in cats)
            origins.extend([column.name] * len(cats))
            continuous.extend([False] * len(cats))

    X = np.hstack(blocks) if blocks else np.zeros((table.n_rows, 0))
    ds = EncodedDataset(
        X=X,
        y=y,
        s=s,
        feature_names=tuple(names),
        feature_origins=tuple(origins),
        continuous_mask=np.array(continuous, dtype=bool),
        sensitive_feature_indices=(sensitive_index,) if sensitive_index is not None else (),
        categories=categories,
        groups_swapped=swapped,
    )
    logger.debug("Encoded %d rows into %d features", ds.n, ds.d)
    return ds


def decode_one_hot(ds: EncodedDataset, column: str) -> list[str]:
    """Recover category values of an encoded categorical column."""
    if column not in ds.categories:
        raise ArgumentError(f"'{column}' is not an encoded categorical column")
    cats = ds.categories[column]
    idx = [j for j, origin in enumerate(ds.feature_origins) if origin == column]
    block = ds.X[:, idx]
    if len(cats) == 2:
        return [cats[int(v)] for v in block[:, 0]]
    return [cats[int(j)] for j in block.argmax(axis=1)]


# ============ Splits ============

@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of each row to one of ``k`` folds."""
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def kfold(n: int, k: int, seed: int) -> FoldPlan:
    """Shuffled k-fold partition of ``range(n)``; fold sizes differ by at most one."""
    if k < 2 or k > n:
        raise ArgumentError(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = np.arange(n) % k
    assignments.setflags(write=False)
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled (train, holdout) index arrays, each sorted."""
    if not 0.0 < fraction < 1.0:
        raise ArgumentError(f"holdout fraction must be in (0, 1), got {fraction}")
    n_holdout = int(round(n * fraction))
    if n_holdout < 1 or n_holdout >= n:
        raise ArgumentError(f"holdout fraction {fraction} leaves an empty split of {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[n_holdout:]), np.sort(order[:n_holdout])


def balanced_subsample(ds: EncodedDataset, group_sizes: Mapping[int, int], seed: int) -> EncodedDataset:
    """Subsample each listed S group without replacement; other groups are kept whole.

    Row order of the result follows the original dataset.
    """
    rng = np.random.default_rng(seed)
    keep = []
    for group in (0, 1):
        rows = ds.group_rows(group)
        if group not in group_sizes:
            keep.append(rows)
            continue
        size = group_sizes[group]
        if size < 0 or size > len(rows):
            raise ArgumentError(f"Requested {size} rows from group S={group} which has {len(rows)}")
        keep.append(rng.choice(rows, size=size, replace=False))
    return ds.subset(np.sort(np.concatenate(keep)))


def equalized_group_sizes(ds: EncodedDataset) -> dict[int, int]:
    """Group sizes capping the larger S group at the size of the smaller one."""
    n0, n1 = len(ds.group_rows(0)), len(ds.group_rows(1))
    return {1: n0} if n1 > n0 else {0: n1}
