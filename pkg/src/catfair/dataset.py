"""Tabular data ingestion, category statistics, stratified splitting and
intersectional attribute construction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

KINDS = ("categorical", "numeric", "binary-target")
ROLES = ("feature", "protected", "target", "ignored")
SEPARATOR = "|"


class DataError(ValueError):
    """Raised for malformed input data or an invalid schema."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    role: str = "feature"

    def __post_init__(self):
        if not self.name:
            raise DataError("column name must be non-empty")
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")
        if (self.kind == "binary-target") != (self.role == "target"):
            raise DataError(
                f"column {self.name!r}: kind binary-target and role target go together"
            )

    @classmethod
    def from_dict(cls, d: Mapping) -> "ColumnSchema":
        return cls(name=str(d["name"]), kind=str(d["kind"]), role=str(d.get("role", "feature")))

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "role": self.role}


def validate_schema(schema: Sequence[ColumnSchema], require_protected: bool = False) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise DataError("column names must be unique")
    targets = [c for c in schema if c.role == "target"]
    if len(targets) != 1:
        raise DataError(f"exactly one target column required, found {len(targets)}")
    if require_protected and not any(c.role == "protected" for c in schema):
        raise DataError("at least one protected column is required")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Column-oriented table with a binary target.

    ``index`` holds the original row number of every row; it survives
    subsetting so that per-row randomness (e.g. encoding noise) is
    reproducible on any split of the data.
    """

    schema: tuple[ColumnSchema, ...]
    columns: Mapping[str, np.ndarray]
    index: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        schema = tuple(self.schema)
        validate_schema(schema)
        object.__setattr__(self, "schema", schema)
        cols = {}
        n = None
        for col in schema:
            if col.name not in self.columns:
                raise DataError(f"missing data for column {col.name!r}")
            values = np.asarray(self.columns[col.name])
            if n is None:
                n = len(values)
            elif len(values) != n:
                raise DataError("columns have different lengths")
            cols[col.name] = _freeze(_coerce(col, values))
        if not n:
            raise DataError("dataset must contain at least one row")
        index = np.arange(n) if self.index is None else np.asarray(self.index, dtype=np.int64)
        if index.shape != (n,):
            raise DataError("row index length does not match data")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "index", _freeze(index.copy()))

    @property
    def n(self) -> int:
        return len(self.index)

    def __len__(self) -> int:
        return self.n

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def spec(self, name: str) -> ColumnSchema:
        for col in self.schema:
            if col.name == name:
                return col
        raise DataError(f"unknown column {name!r}")

    def column(self, name: str) -> np.ndarray:
        self.spec(name)
        return self.columns[name]

    @property
    def target_name(self) -> str:
        return next(c.name for c in self.schema if c.role == "target")

    @property
    def target(self) -> np.ndarray:
        return self.columns[self.target_name]

    @property
    def protected(self) -> list[str]:
        return [c.name for c in self.schema if c.role == "protected"]

    def rows(self) -> Iterator[tuple]:
        """Row-major view of the table, in schema column order."""
        cols = [self.columns[c.name] for c in self.schema]
        for i in range(self.n):
            yield tuple(col[i].item() for col in cols)

    def take(self, rows: Iterable[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.schema,
            {k: v[rows] for k, v in self.columns.items()},
            self.index[rows],
        )

    def with_roles(self, roles: Mapping[str, str]) -> "Dataset":
        for name in roles:
            self.spec(name)
        schema = tuple(replace(c, role=roles.get(c.name, c.role)) for c in self.schema)
        return Dataset(schema, self.columns, self.index)

    def with_column(self, col: ColumnSchema, values) -> "Dataset":
        if col.name in self.columns:
            raise DataError(f"column {col.name!r} already exists")
        return Dataset(self.schema + (col,), {**self.columns, col.name: values}, self.index)


def _coerce(col: ColumnSchema, values: np.ndarray) -> np.ndarray:
    if col.kind == "categorical":
        out = values.astype(str)
        if out.size and (np.char.str_len(out) == 0).any():
            raise DataError(f"column {col.name!r}: empty categorical cell")
        return out
    if col.kind == "numeric":
        try:
            out = values.astype(np.float64)
        except (TypeError, ValueError) as exc:
            raise DataError(f"column {col.name!r}: non-numeric cell") from exc
        if not np.isfinite(out).all():
            raise DataError(f"column {col.name!r}: non-finite numeric cell")
        return out
    if values.dtype.kind in "fiub":
        ok = np.isin(values, (0, 1))
        out = values.astype(np.int8)
    else:
        text = values.astype(str)
        ok = np.isin(text, ("0", "1"))
        out = (text == "1").astype(np.int8)
    if not ok.all():
        raise DataError(f"column {col.name!r}: unparseable target (must be 0 or 1)")
    return out


def load_csv(path: str | Path, schema: Sequence[ColumnSchema]) -> Dataset:
    """Read a comma-separated file whose header matches ``schema`` exactly."""
    schema = tuple(schema)
    validate_schema(schema)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        text = fh.read()
    if '"' in text:
        raise DataError("quoted fields are not supported")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty file")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    expected = [c.name for c in schema]
    if header != expected:
        raise DataError(f"header mismatch: expected {expected}, got {header}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append([cell.strip() for cell in row])
    if not rows:
        raise DataError("empty file")
    columns = {}
    for j, col in enumerate(schema):
        cells = [r[j] for r in rows]
        if col.kind == "binary-target":
            bad = [c for c in cells if c not in ("0", "1")]
            if bad:
                raise DataError(f"unparseable target {bad[0]!r} in column {col.name!r}")
            columns[col.name] = np.array(cells, dtype=np.int8)
        elif col.kind == "numeric":
            try:
                vals = np.array([float(c) for c in cells])
            except ValueError as exc:
                raise DataError(f"column {col.name!r}: {exc}") from exc
            if not np.isfinite(vals).all():
                raise DataError(f"column {col.name!r}: non-finite numeric cell")
            columns[col.name] = vals
        else:
            if any(SEPARATOR in c for c in cells):
                raise DataError(f"column {col.name!r}: tokens may not contain {SEPARATOR!r}")
            if any(c == "" for c in cells):
                raise DataError(f"column {col.name!r}: missing categorical cell")
            columns[col.name] = np.array(cells, dtype=str)
    return Dataset(schema, columns)


@dataclass(frozen=True)
class CategoryStatistics:
    """Per-category and global counts of a categorical attribute."""

    attribute: str
    categories: tuple[str, ...]
    counts: np.ndarray
    positives: np.ndarray
    n: int
    n_y: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        positives = np.asarray(self.positives, dtype=np.int64)
        if len(counts) != len(self.categories) or len(positives) != len(self.categories):
            raise DataError("count arrays must align with categories")
        if len(set(self.categories)) != len(self.categories):
            raise DataError("duplicate category")
        if (counts < 1).any() or (positives < 0).any() or (positives > counts).any():
            raise DataError("invalid category counts")
        if counts.sum() != self.n or positives.sum() != self.n_y:
            raise DataError("category counts do not add up to the global counts")
        object.__setattr__(self, "counts", _freeze(counts))
        object.__setattr__(self, "positives", _freeze(positives))

    @property
    def c(self) -> int:
        return len(self.categories)

    @property
    def prior(self) -> float:
        """Global positive rate n_Y / n."""
        return self.n_y / self.n

    @property
    def rates(self) -> np.ndarray:
        return self.positives / self.counts

    def position(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise KeyError(category) from None

    def record(self, category: str) -> tuple[int, int]:
        i = self.position(category)
        return int(self.counts[i]), int(self.positives[i])

    def as_dict(self) -> dict[str, tuple[int, int]]:
        return {z: (int(a), int(b)) for z, a, b in zip(self.categories, self.counts, self.positives)}

    def __add__(self, other: "CategoryStatistics") -> "CategoryStatistics":
        if other.attribute != self.attribute:
            raise DataError("cannot add statistics of different attributes")
        cats = list(self.categories) + [z for z in other.categories if z not in self.categories]
        counts = dict.fromkeys(cats, 0)
        pos = dict.fromkeys(cats, 0)
        for s in (self, other):
            for z, (a, b) in s.as_dict().items():
                counts[z] += a
                pos[z] += b
        return CategoryStatistics(
            self.attribute,
            tuple(cats),
            np.array([counts[z] for z in cats]),
            np.array([pos[z] for z in cats]),
            self.n + other.n,
            self.n_y + other.n_y,
        )


def _categorical(data: Dataset, attribute: str) -> np.ndarray:
    if data.spec(attribute).kind != "categorical":
        raise DataError(f"column {attribute!r} is not categorical")
    return data.columns[attribute]


def first_appearance(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique values in order of first appearance, plus the inverse mapping."""
    uniq, first, inverse = np.unique(values, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return uniq[order], rank[inverse.ravel()]


def category_stats(data: Dataset, attribute: str) -> CategoryStatistics:
    values = _categorical(data, attribute)
    cats, codes = first_appearance(values)
    y = data.target.astype(np.int64)
    counts = np.bincount(codes, minlength=len(cats))
    positives = np.bincount(codes, weights=y, minlength=len(cats)).astype(np.int64)
    return CategoryStatistics(
        attribute, tuple(str(z) for z in cats), counts, positives, data.n, int(y.sum())
    )


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(
    data: Dataset, train_fraction: float, stratify_by: str, seed: int
) -> tuple[Dataset, Dataset]:
    """Split rows so every category of ``stratify_by`` keeps its share.

    Each category contributes ``round(train_fraction * n_i)`` rows (half up)
    to the training part; a singleton category always goes to training.
    Raises ``DataError`` when that leaves nothing for evaluation.
    Within a category, positives are allocated so that the target rate of
    both parts stays as close as possible to the category's rate.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    values = _categorical(data, stratify_by)
    rng = np.random.default_rng(seed)
    y = data.target
    _, codes = first_appearance(values)
    train_rows = []
    for code in range(codes.max() + 1):
        rows = np.flatnonzero(codes == code)
        n_i = len(rows)
        k = 1 if n_i == 1 else min(n_i, _half_up(train_fraction * n_i))
        pos = rows[y[rows] == 1]
        neg = rows[y[rows] == 0]
        k_pos = _allocate_positives(n_i, len(pos), k)
        train_rows.append(rng.permutation(pos)[:k_pos])
        train_rows.append(rng.permutation(neg)[: k - k_pos])
    train_mask = np.zeros(data.n, dtype=bool)
    train_mask[np.concatenate(train_rows)] = True
    if train_mask.all():
        raise DataError("split leaves the evaluation part empty")
    return data.take(np.flatnonzero(train_mask)), data.take(np.flatnonzero(~train_mask))


def _allocate_positives(n_i: int, n_pos: int, k: int) -> int:
    ideal = k * n_pos / n_i
    lo = max(math.floor(ideal), k - (n_i - n_pos), 0)
    hi = min(math.ceil(ideal), n_pos, k)
    best, best_dev = lo, math.inf
    for k_pos in range(lo, hi + 1):
        dev = 0.0
        if k:
            dev = abs(k_pos / k - n_pos / n_i)
        if n_i - k:
            dev = max(dev, abs((n_pos - k_pos) / (n_i - k) - n_pos / n_i))
        if dev < best_dev:
            best, best_dev = k_pos, dev
    return best


def concat_attributes(data: Dataset, attributes: Sequence[str], new_name: str) -> Dataset:
    """Add the row-wise concatenation of categorical columns as a new column.

    Source columns stay in the table with role ``ignored``; the new column is
    protected if any source was.
    """
    if len(attributes) < 2:
        raise DataError("at least two attributes are needed for concatenation")
    if new_name in data.columns:
        raise DataError(f"column {new_name!r} already exists")
    parts = [_categorical(data, a) for a in attributes]
    joined = parts[0].astype(object)
    for p in parts[1:]:
        joined = joined + SEPARATOR + p.astype(object)
    role = "protected" if any(data.spec(a).role == "protected" for a in attributes) else "feature"
    out = data.with_roles({a: "ignored" for a in attributes})
    return out.with_column(ColumnSchema(new_name, "categorical", role), joined.astype(str))


@dataclass(frozen=True)
class GroupSpec:
    """Protected attribute plus the reference group every other group is
    compared against."""

    attribute: str
    reference: str

    def check(self, data: Dataset) -> None:
        values = _categorical(data, self.attribute)
        if not (values == self.reference).any():
            raise DataError(
                f"reference group {self.reference!r} does not occur in {self.attribute!r}"
            )

    def comparison_groups(self, data: Dataset) -> list[str]:
        cats, _ = first_appearance(_categorical(data, self.attribute))
        return [str(z) for z in cats if z != self.reference]
