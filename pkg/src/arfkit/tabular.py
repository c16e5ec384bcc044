"""Typed tabular data: schemas, CSV round trips, train/test splits.

Columns are either continuous (float64) or categorical (int codes into a
sorted tuple of level strings). Data is stored column-major; a float64
matrix view (categorical cells as their codes) is materialized on demand
for the tree kernels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

# A column is continuous only if every cell parses as a finite real and the
# number of distinct raw strings exceeds this. Low-cardinality numeric codes
# (flags, small ordinals) are treated as categorical on purpose.
DISTINCT_THRESHOLD = 10


class DataError(ValueError):
    """Malformed input data: ragged rows, unparseable or missing cells."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # CONTINUOUS or CATEGORICAL
    levels: tuple[str, ...] | None = None  # sorted, categorical only

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise ValueError(f"categorical column {self.name!r} needs levels")
            if list(self.levels) != sorted(set(self.levels)):
                raise ValueError(f"levels of {self.name!r} must be sorted and unique")
        elif self.levels is not None:
            raise ValueError(f"continuous column {self.name!r} cannot have levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def n_levels(self) -> int:
        return len(self.levels) if self.levels else 0


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names")

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self):
        return iter(self.columns)

    def __getitem__(self, i: int) -> Column:
        return self.columns[i]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(f"no column named {name!r}")

    def categorical_mask(self) -> np.ndarray:
        return np.array([c.is_categorical for c in self.columns], dtype=bool)

    def level_counts(self) -> np.ndarray:
        return np.array([c.n_levels for c in self.columns], dtype=np.int64)


@dataclass
class Dataset:
    schema: Schema
    columns: list[np.ndarray]  # float64 for continuous, int64 codes otherwise
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.columns) != len(self.schema):
            raise ValueError("column count does not match schema")
        n = len(self.columns[0]) if self.columns else 0
        for col, arr in zip(self.schema, self.columns):
            if len(arr) != n:
                raise ValueError("columns have unequal lengths")
            want = np.int64 if col.is_categorical else np.float64
            if arr.dtype != want:
                raise ValueError(f"column {col.name!r} must be {want}")
            if col.is_categorical and len(arr) and (
                arr.min() < 0 or arr.max() >= col.n_levels
            ):
                raise ValueError(f"code out of range in column {col.name!r}")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n_cols(self) -> int:
        return len(self.schema)

    def matrix(self) -> np.ndarray:
        """Float64 ``(n_rows, n_cols)`` view; categorical cells are codes."""
        if self._matrix is None:
            m = np.empty((self.n_rows, self.n_cols), dtype=np.float64)
            for j, arr in enumerate(self.columns):
                m[:, j] = arr
            self._matrix = m
        return self._matrix

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.schema.index_of(name)]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.schema, [c[idx] for c in self.columns])


def from_matrix(schema: Schema, m: np.ndarray) -> Dataset:
    """Rebuild a Dataset from a float matrix whose categorical cells are codes."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != len(schema):
        raise ValueError("matrix shape does not match schema")
    cols = []
    for j, col in enumerate(schema):
        if col.is_categorical:
            cols.append(np.asarray(np.rint(m[:, j]), dtype=np.int64))
        else:
            cols.append(m[:, j].copy())
    return Dataset(schema, cols)


def stack_rows(a: Dataset, b: Dataset) -> Dataset:
    if a.schema != b.schema:
        raise ValueError("schemas differ")
    return Dataset(a.schema, [np.concatenate([x, y]) for x, y in zip(a.columns, b.columns)])


def drop_column(ds: Dataset, name: str) -> Dataset:
    j = ds.schema.index_of(name)
    cols = tuple(c for k, c in enumerate(ds.schema.columns) if k != j)
    return Dataset(Schema(cols), [a for k, a in enumerate(ds.columns) if k != j])


def _parses_finite(cell: str) -> bool:
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def infer_schema(names, rows, distinct_threshold: int = DISTINCT_THRESHOLD) -> Schema:
    """Infer column kinds from raw string cells.

    A column is continuous iff every non-empty cell parses as a finite real
    and the distinct-string count exceeds ``distinct_threshold``; otherwise
    it is categorical with levels = sorted distinct strings.
    """
    d = len(names)
    for i, row in enumerate(rows):
        if len(row) != d:
            raise DataError(f"row {i} has {len(row)} cells, expected {d}")
    cols = []
    for j, name in enumerate(names):
        cells = [row[j] for row in rows]
        distinct = set(cells)
        numeric = all(_parses_finite(c) for c in distinct if c != "")
        if numeric and len(distinct) > distinct_threshold:
            cols.append(Column(name, CONTINUOUS))
        else:
            cols.append(Column(name, CATEGORICAL, tuple(sorted(distinct))))
    return Schema(tuple(cols))


def _encode(names, rows, schema: Schema) -> Dataset:
    d = len(schema)
    if list(names) != schema.names:
        raise DataError(f"header {list(names)} does not match schema {schema.names}")
    n = len(rows)
    cols: list[np.ndarray] = []
    for j, col in enumerate(schema):
        if col.is_categorical:
            lut = {lv: k for k, lv in enumerate(col.levels)}
            out = np.empty(n, dtype=np.int64)
            for i, row in enumerate(rows):
                try:
                    out[i] = lut[row[j]]
                except KeyError:
                    raise DataError(
                        f"row {i}, column {col.name!r}: unknown level {row[j]!r}"
                    ) from None
        else:
            out = np.empty(n, dtype=np.float64)
            for i, row in enumerate(rows):
                cell = row[j]
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(
                        f"row {i}, column {col.name!r}: cannot parse {cell!r} as a finite real"
                    )
                out[i] = v
        cols.append(out)
    return Dataset(schema, cols)


def load_csv(path, schema: Schema | None = None,
             distinct_threshold: int = DISTINCT_THRESHOLD) -> Dataset:
    """Load a comma-delimited, headered, UTF-8 CSV ('.' decimal separator).

    With ``schema=None`` the schema is inferred first. Missing cells and
    ragged rows raise DataError; there is no NA handling by design.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    d = len(names)
    for i, row in enumerate(rows):
        if len(row) != d:
            raise DataError(f"{path}: row {i} has {len(row)} cells, expected {d}")
        for j, cell in enumerate(row):
            if cell == "":
                raise DataError(f"{path}: row {i}, column {names[j]!r} is empty")
    if schema is None:
        schema = infer_schema(names, rows, distinct_threshold)
    return _encode(names, rows, schema)


def save_csv(ds: Dataset, path) -> None:
    """Write a Dataset back to CSV. Floats use repr, so a reload is bit-exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.schema.names)
        decoded = []
        for col, arr in zip(ds.schema, ds.columns):
            if col.is_categorical:
                decoded.append([col.levels[k] for k in arr])
            else:
                decoded.append([repr(float(v)) for v in arr])
        for i in range(ds.n_rows):
            writer.writerow([decoded[j][i] for j in range(ds.n_cols)])


def schema_to_dict(schema: Schema) -> dict:
    return {
        "columns": [
            {"name": c.name, "kind": c.kind}
            if not c.is_categorical
            else {"name": c.name, "kind": c.kind, "levels": list(c.levels)}
            for c in schema
        ]
    }


def schema_from_dict(obj: dict) -> Schema:
    cols = []
    for c in obj["columns"]:
        levels = tuple(c["levels"]) if c.get("levels") is not None else None
        cols.append(Column(c["name"], c["kind"], levels))
    return Schema(tuple(cols))


def save_schema(schema: Schema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_dict(schema), fh, indent=2)
        fh.write("\n")


def load_schema(path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


def _largest_remainder(targets: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation: floor the targets, hand out the remainder."""
    base = np.floor(targets).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(targets - base), kind="stable")
        base[order[:short]] += 1
    return base


def split_train_test(ds: Dataset, test_fraction: float, seed: int,
                     stratify: str | None = None) -> tuple[Dataset, Dataset]:
    """Disjoint train/test split; test size is round(n * test_fraction).

    With ``stratify`` naming a categorical column, each level contributes to
    the test set proportionally (within one row of its exact share).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n = ds.n_rows
    n_test = int(round(n * test_fraction))
    rng = np.random.default_rng(seed)
    if stratify is None:
        perm = rng.permutation(n)
        test_idx = perm[:n_test]
    else:
        j = ds.schema.index_of(stratify)
        if not ds.schema[j].is_categorical:
            raise ValueError(f"stratify column {stratify!r} must be categorical")
        codes = ds.columns[j]
        levels, counts = np.unique(codes, return_counts=True)
        alloc = _largest_remainder(counts * test_fraction, n_test)
        parts = []
        for lv, k in zip(levels, alloc):
            idx = np.flatnonzero(codes == lv)
            parts.append(rng.permutation(idx)[:k])
        test_idx = np.concatenate(parts)
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_idx] = True
    return ds.take(np.flatnonzero(~test_mask)), ds.take(np.flatnonzero(test_mask))
