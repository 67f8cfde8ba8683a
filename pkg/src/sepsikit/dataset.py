"""Tabular clinical records: loading, validation, profiling, cleaning, splitting.

A Dataset is column-major and immutable. Numeric columns hold float64 values,
categorical columns hold int64 codes plus a code->string dictionary, and every
column carries a boolean missing mask. A cell flagged missing has no
interpretable value; readers must consult the mask first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ValidationError

#: Tokens (lowercased, stripped) that mark a missing cell in delimited input.
MISSING_TOKENS = frozenset({"", "nan", "na"})

_DELIMITERS = {"csv": ",", "psv": "|"}


class ColumnKind(Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    LABEL = "label"


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: ColumnKind
    missing_fraction: float
    dictionary: tuple[str, ...] = ()


@dataclass(frozen=True)
class Dataset:
    columns: tuple[ColumnMeta, ...]
    cells: tuple[np.ndarray, ...]
    missing_mask: tuple[np.ndarray, ...]
    n_rows: int
    label_column: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("column names are not unique")
        if not (len(self.columns) == len(self.cells) == len(self.missing_mask)):
            raise ValidationError("columns, cells, and masks are misaligned")
        for meta, values, mask in zip(self.columns, self.cells, self.missing_mask):
            if len(values) != self.n_rows or len(mask) != self.n_rows:
                raise ValidationError(f"column '{meta.name}' does not have n_rows cells")
            observed_fraction = float(np.count_nonzero(mask)) / self.n_rows if self.n_rows else 0.0
            if abs(meta.missing_fraction - observed_fraction) > 1e-12:
                raise ValidationError(f"column '{meta.name}' missing_fraction is stale")
            values.flags.writeable = False
            mask.flags.writeable = False
        if self.label_column is not None:
            meta, values, mask = self.column(self.label_column)
            if mask.any():
                raise ValidationError(f"label column '{self.label_column}' has missing entries")
            if not np.isin(values, (0, 1)).all():
                raise ValidationError(f"label column '{self.label_column}' holds values outside {{0, 1}}")

    # -- accessors ---------------------------------------------------------

    def column_index(self, name: str) -> int:
        for i, meta in enumerate(self.columns):
            if meta.name == name:
                return i
        raise ValidationError(f"no column named '{name}'")

    def column(self, name: str) -> tuple[ColumnMeta, np.ndarray, np.ndarray]:
        i = self.column_index(name)
        return self.columns[i], self.cells[i], self.missing_mask[i]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.name != self.label_column)

    def labels(self) -> np.ndarray:
        if self.label_column is None:
            raise ValidationError("dataset has no label column")
        return self.column(self.label_column)[1].astype(np.int64)

    def missing_cell_count(self) -> int:
        return int(sum(int(np.count_nonzero(m)) for m in self.missing_mask))

    # -- structural operations ----------------------------------------------

    def subset_rows(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        cells = tuple(v[indices].copy() for v in self.cells)
        masks = tuple(m[indices].copy() for m in self.missing_mask)
        return from_columns(
            [(c.name, c.kind, cells[i], masks[i], c.dictionary) for i, c in enumerate(self.columns)],
            n_rows=len(indices),
            label_column=self.label_column,
        )

    def select_columns(self, names: list[str] | tuple[str, ...]) -> "Dataset":
        label = self.label_column if self.label_column in names else None
        triples = [self.column(n) for n in names]
        return from_columns(
            [(m.name, m.kind, v, msk, m.dictionary) for m, v, msk in triples],
            n_rows=self.n_rows,
            label_column=label,
        )

    def with_label(self, name: str) -> "Dataset":
        """Designate `name` as the binary label column.

        The column must be fully observed and hold only 0/1 values: a numeric
        column of 0.0/1.0, or a categorical one whose category strings are
        "0"/"1".
        """
        i = self.column_index(name)
        meta, values, mask = self.columns[i], self.cells[i], self.missing_mask[i]
        if mask.any():
            raise ValidationError(f"label column '{name}' has missing entries; drop or filter those rows first")
        if meta.kind == ColumnKind.NUMERIC:
            if not np.isin(values, (0.0, 1.0)).all():
                raise ValidationError(f"label column '{name}' holds values outside {{0, 1}}")
            codes = values.astype(np.int64)
        elif meta.kind == ColumnKind.CATEGORICAL:
            if not set(meta.dictionary) <= {"0", "1"}:
                raise ValidationError(f"label column '{name}' categories are not '0'/'1'")
            remap = np.array([int(tok) for tok in meta.dictionary], dtype=np.int64)
            codes = remap[values]
        else:
            codes = values.astype(np.int64)
        spec = [(c.name, c.kind, self.cells[j], self.missing_mask[j], c.dictionary) for j, c in enumerate(self.columns)]
        spec[i] = (name, ColumnKind.LABEL, codes, mask, ())
        return from_columns(spec, n_rows=self.n_rows, label_column=name)


def from_columns(
    spec: list[tuple[str, ColumnKind, np.ndarray, np.ndarray, tuple[str, ...]]],
    n_rows: int,
    label_column: str | None = None,
) -> Dataset:
    """Build a Dataset from (name, kind, values, mask, dictionary) tuples."""
    metas = []
    cells = []
    masks = []
    for name, kind, values, mask, dictionary in spec:
        values = np.array(values, copy=True)
        mask = np.array(mask, dtype=bool, copy=True)
        frac = float(np.count_nonzero(mask)) / n_rows if n_rows else 0.0
        metas.append(ColumnMeta(name=name, kind=kind, missing_fraction=frac, dictionary=tuple(dictionary)))
        cells.append(values)
        masks.append(mask)
    return Dataset(
        columns=tuple(metas),
        cells=tuple(cells),
        missing_mask=tuple(masks),
        n_rows=n_rows,
        label_column=label_column,
    )


# -- loading and saving ------------------------------------------------------


def _is_missing(token: str) -> bool:
    return token.strip().lower() in MISSING_TOKENS


def _parses_numeric(token: str) -> bool:
    try:
        return math.isfinite(float(token))
    except ValueError:
        return False


def _parse_rows(header: list[str], rows: list[list[str]], schema_hints: dict | None) -> Dataset:
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise ValidationError(f"duplicate header name(s): {', '.join(dupes)}")
    if not rows:
        raise ValidationError("no data rows")
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ValidationError(
                f"ragged row {r}: expected {len(header)} fields, found {len(row)}"
            )
    hints = {}
    for name, kind in (schema_hints or {}).items():
        hints[name] = kind if isinstance(kind, ColumnKind) else ColumnKind(str(kind))

    n = len(rows)
    spec = []
    label_column = None
    for j, name in enumerate(header):
        tokens = [row[j].strip() for row in rows]
        mask = np.array([_is_missing(t) for t in tokens], dtype=bool)
        hinted = hints.get(name)
        if hinted in (ColumnKind.NUMERIC, ColumnKind.LABEL):
            numeric = True
        elif hinted is ColumnKind.CATEGORICAL:
            numeric = False
        else:
            numeric = all(_parses_numeric(t) for t, m in zip(tokens, mask) if not m)
        if numeric:
            values = np.zeros(n, dtype=float)
            for i, (t, m) in enumerate(zip(tokens, mask)):
                if m:
                    values[i] = np.nan
                    continue
                if not _parses_numeric(t):
                    raise ValidationError(f"column '{name}' hinted numeric but row {i + 1} holds '{t}'")
                values[i] = float(t)
            spec.append((name, ColumnKind.NUMERIC, values, mask, ()))
        else:
            dictionary: list[str] = []
            seen: dict[str, int] = {}
            codes = np.zeros(n, dtype=np.int64)
            for i, (t, m) in enumerate(zip(tokens, mask)):
                if m:
                    continue
                if t not in seen:
                    seen[t] = len(dictionary)
                    dictionary.append(t)
                codes[i] = seen[t]
            spec.append((name, ColumnKind.CATEGORICAL, codes, mask, tuple(dictionary)))
        if hinted is ColumnKind.LABEL:
            label_column = name
    ds = from_columns(spec, n_rows=n)
    if label_column is not None:
        ds = ds.with_label(label_column)
    return ds


def load_table(path: str | Path, format: str = "csv", schema_hints: dict | None = None) -> Dataset:
    """Load a delimited text file (format "csv" or "psv", header row required).

    Empty fields and the tokens "NaN"/"NA" (any case) become masked cells.
    Without a hint, a column is numeric exactly when every non-missing token
    parses as a finite decimal number.
    """
    if format not in _DELIMITERS:
        raise ValidationError(f"unknown format '{format}' (expected one of {sorted(_DELIMITERS)})")
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=_DELIMITERS[format])
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    return _parse_rows([h.strip() for h in header], rows, schema_hints)


def load_directory(path: str | Path, format: str = "psv", schema_hints: dict | None = None) -> Dataset:
    """Concatenate per-patient delimited files (shared header) into one Dataset.

    Files are read in sorted name order; every file must repeat the header of
    the first one exactly.
    """
    if format not in _DELIMITERS:
        raise ValidationError(f"unknown format '{format}'")
    path = Path(path)
    if not path.is_dir():
        raise ValidationError(f"input directory not found: {path}")
    files = sorted(p for p in path.iterdir() if p.is_file())
    if not files:
        raise ValidationError(f"{path}: no files to ingest")
    header: list[str] | None = None
    rows: list[list[str]] = []
    for f in files:
        with f.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter=_DELIMITERS[format])
            try:
                this_header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise ValidationError(f"{f}: empty file") from None
            if header is None:
                header = this_header
            elif this_header != header:
                raise ValidationError(f"{f}: header differs from {files[0].name}")
            rows.extend(row for row in reader if row)
    assert header is not None
    return _parse_rows(header, rows, schema_hints)


def format_cell(meta: ColumnMeta, value, missing: bool) -> str:
    if missing:
        return ""
    if meta.kind == ColumnKind.NUMERIC:
        return repr(float(value))
    if meta.kind == ColumnKind.CATEGORICAL:
        return meta.dictionary[int(value)]
    return str(int(value))


def serialize_table(ds: Dataset, format: str = "csv") -> str:
    """Render a Dataset back to delimited text; missing cells become empty fields.

    Numeric cells use shortest round-trip float formatting, so
    load -> serialize -> load reproduces values and masks exactly.
    """
    if format not in _DELIMITERS:
        raise ValidationError(f"unknown format '{format}'")
    sep = _DELIMITERS[format]
    lines = [sep.join(c.name for c in ds.columns)]
    for i in range(ds.n_rows):
        fields = [
            format_cell(meta, ds.cells[j][i], bool(ds.missing_mask[j][i]))
            for j, meta in enumerate(ds.columns)
        ]
        lines.append(sep.join(fields))
    return "\n".join(lines) + "\n"


def save_table(ds: Dataset, path: str | Path, format: str = "csv") -> None:
    Path(path).write_text(serialize_table(ds, format), encoding="utf-8")


# -- profiling and cleaning ---------------------------------------------------


def sparsity_profile(ds: Dataset) -> list[tuple[str, float]]:
    """One (column name, missing fraction) pair per column, descending by fraction."""
    return sorted(
        ((c.name, c.missing_fraction) for c in ds.columns),
        key=lambda pair: -pair[1],
    )


def drop_sparse_columns(ds: Dataset, threshold: float = 0.9) -> Dataset:
    """Keep columns with missing_fraction <= threshold; the label is never dropped."""
    if not 0.0 < threshold <= 1.0:
        raise ValidationError("threshold must lie in (0, 1]")
    keep = [
        c.name
        for c in ds.columns
        if c.name == ds.label_column or c.missing_fraction <= threshold
    ]
    if all(name == ds.label_column for name in keep):
        raise ValidationError("empty feature set: every non-label column exceeds the sparsity threshold")
    return ds.select_columns(keep)


def drop_rows_missing_label(ds: Dataset, label_name: str) -> Dataset:
    """Drop rows whose prospective label cell is masked."""
    _, _, mask = ds.column(label_name)
    keep = np.flatnonzero(~mask)
    if len(keep) == 0:
        raise ValidationError(f"every row is missing '{label_name}'")
    return ds.subset_rows(keep)


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    validation_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        for field_name in ("train_fraction", "validation_fraction", "test_fraction"):
            value = getattr(self, field_name)
            if not 0.0 < value < 1.0:
                raise ValidationError(f"split.{field_name} must lie in (0, 1), got {value}")
        total = self.train_fraction + self.validation_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(
                f"split fractions must sum to 1.0 (train+validation+test = {total!r})"
            )
        if not 0 <= self.seed < 2**64:
            raise ValidationError("split.seed must be an unsigned 64-bit integer")


def _apportion(count: int, totals: tuple[int, int, int], n: int) -> list[int]:
    """Largest-remainder share of `count` rows across partitions sized `totals`."""
    quotas = [count * t / n for t in totals]
    shares = [int(math.floor(q)) for q in quotas]
    short = count - sum(shares)
    order = sorted(range(3), key=lambda i: -(quotas[i] - shares[i]))
    for i in order[:short]:
        shares[i] += 1
    return shares


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition rows into (train, validation, test) by a seeded shuffle.

    Validation and test take floor(n * fraction) rows each and train takes the
    remainder. The shuffle uses numpy's PCG64 generator, so identical
    (dataset, spec) pairs give bit-identical partitions on every platform.
    When stratified, the binary label's per-class counts in each partition
    stay within one row of exact proportionality.
    """
    n = ds.n_rows
    n_val = int(math.floor(n * spec.validation_fraction))
    n_test = int(math.floor(n * spec.test_fraction))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValidationError(f"empty partition for n={n} with fractions "
                              f"{spec.train_fraction}/{spec.validation_fraction}/{spec.test_fraction}")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    if not spec.stratified:
        parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    else:
        if ds.label_column is None:
            raise ValidationError("stratified split requires a label column")
        y = ds.labels()
        pos = perm[y[perm] == 1]
        neg = perm[y[perm] == 0]
        pos_share = _apportion(len(pos), (n_train, n_val, n_test), n)
        neg_share = [t - s for t, s in zip((n_train, n_val, n_test), pos_share)]
        if min(neg_share) < 0:
            raise ValidationError("stratified split infeasible for these class counts")
        parts = tuple(
            np.concatenate([neg[sum(neg_share[:i]):sum(neg_share[:i + 1])],
                            pos[sum(pos_share[:i]):sum(pos_share[:i + 1])]])
            for i in range(3)
        )
    return tuple(ds.subset_rows(p) for p in parts)  # type: ignore[return-value]


# -- model-facing matrix view -------------------------------------------------


def design_matrix(
    ds: Dataset, features: list[str] | tuple[str, ...] | None = None
) -> tuple[np.ndarray, list[str]]:
    """Expand the named feature columns into a float matrix for the models.

    Numeric columns pass through; categorical columns expand into one-hot
    indicator columns named "col=value" (one per dictionary entry, in code
    order). Masked cells surface as NaN so downstream models can reject
    unimputed data.
    """
    names = list(features) if features is not None else list(ds.feature_names)
    blocks: list[np.ndarray] = []
    out_names: list[str] = []
    for name in names:
        meta, values, mask = ds.column(name)
        if meta.kind == ColumnKind.NUMERIC:
            col = values.astype(float).copy()
            col[mask] = np.nan
            blocks.append(col[:, None])
            out_names.append(name)
        elif meta.kind == ColumnKind.CATEGORICAL:
            onehot = np.zeros((ds.n_rows, len(meta.dictionary)))
            onehot[np.arange(ds.n_rows), values] = 1.0
            onehot[mask, :] = np.nan
            blocks.append(onehot)
            out_names.extend(f"{name}={tok}" for tok in meta.dictionary)
        else:
            raise ValidationError(f"label column '{name}' cannot enter the design matrix")
    if not blocks:
        return np.zeros((ds.n_rows, 0)), []
    return np.hstack(blocks), out_names
