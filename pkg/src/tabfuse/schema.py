"""Tabular data model: column schema, CSV I/O, and table validation.

A :class:`TableSchema` declares ordered columns (numerical or categorical),
the categorical target column, and the ordered label set. A
:class:`DataTable` holds raw text cells against a schema; every cell is
either a string or ``None`` (missing). Numeric parsing is deferred to
preprocessing so that stray text in numeric columns never kills ingestion.

Schema files are JSON documents::

    {
      "columns": [{"name": "temperature", "kind": "numerical"},
                  {"name": "complaint", "kind": "categorical"},
                  {"name": "outcome", "kind": "categorical"}],
      "target": "outcome",
      "class_labels": ["home", "admitted", "transfer"]
    }

CSV files are RFC 4180: comma separated, first row is the header, UTF-8,
quoted fields where needed. Header order does not have to match schema
order. Empty cells and any configured missing sentinel (default ``""`` and
``"NA"``) load as missing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

DEFAULT_MISSING_VALUES = ("", "NA")


class ColumnKind(str, Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSpec:
    """One column: a non-empty name and a kind."""

    name: str
    kind: ColumnKind

    def __post_init__(self):
        if not self.name:
            raise DataError("column name must be non-empty")
        if not isinstance(self.kind, ColumnKind):
            object.__setattr__(self, "kind", ColumnKind(self.kind))


@dataclass(frozen=True)
class TableSchema:
    """Ordered column specs plus the target column and its label set.

    The target must name exactly one categorical column; class labels are
    distinct and there are at least two of them. Feature columns are all
    columns except the target.
    """

    columns: tuple[ColumnSpec, ...]
    target: str
    class_labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate column names: {dupes}")
        targets = [c for c in self.columns if c.name == self.target]
        if len(targets) != 1:
            raise DataError(f"target column {self.target!r} not found in schema")
        if targets[0].kind is not ColumnKind.CATEGORICAL:
            raise DataError(f"target column {self.target!r} must be categorical")
        if len(self.class_labels) < 2:
            raise DataError("schema needs at least 2 class labels")
        if len(set(self.class_labels)) != len(self.class_labels):
            raise DataError("class labels must be distinct")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def feature_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.name != self.target)

    @property
    def numeric_feature_names(self) -> tuple[str, ...]:
        return tuple(
            c.name for c in self.feature_columns if c.kind is ColumnKind.NUMERICAL
        )

    @property
    def categorical_feature_names(self) -> tuple[str, ...]:
        return tuple(
            c.name for c in self.feature_columns if c.kind is ColumnKind.CATEGORICAL
        )

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise DataError(f"no column named {name!r}")

    def to_json_dict(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind.value} for c in self.columns],
            "target": self.target,
            "class_labels": list(self.class_labels),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TableSchema":
        try:
            columns = tuple(
                ColumnSpec(col["name"], ColumnKind(col["kind"]))
                for col in doc["columns"]
            )
            return cls(columns, doc["target"], tuple(doc["class_labels"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed schema document: {exc}") from exc


@dataclass(frozen=True)
class DataTable:
    """Immutable grid of optional text cells conforming to a schema.

    Each row has exactly one cell per schema column (schema order); ``None``
    marks a missing value. Non-missing target cells must be members of the
    schema's class labels.
    """

    schema: TableSchema
    cells: tuple[tuple[str | None, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "cells", tuple(tuple(row) for row in self.cells)
        )
        width = len(self.schema.columns)
        target_idx = self.schema.column_index(self.schema.target)
        labels = set(self.schema.class_labels)
        for r, row in enumerate(self.cells):
            if len(row) != width:
                raise DataError(
                    f"row {r + 1}: expected {width} cells, got {len(row)}"
                )
            tgt = row[target_idx]
            if tgt is not None and tgt not in labels:
                raise DataError(
                    f"row {r + 1}: target value {tgt!r} is not one of the "
                    f"schema class labels"
                )

    @property
    def row_count(self) -> int:
        return len(self.cells)

    def column(self, name: str) -> tuple[str | None, ...]:
        idx = self.schema.column_index(name)
        return tuple(row[idx] for row in self.cells)

    def subset(self, indices: Iterable[int]) -> "DataTable":
        rows = tuple(self.cells[i] for i in indices)
        return DataTable(self.schema, rows)


def load_schema(path: str | Path) -> TableSchema:
    """Read a JSON schema document. Raises DataError naming a missing path."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"schema file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file {p} is not valid JSON: {exc}") from exc
    return TableSchema.from_json_dict(doc)


def save_schema(schema: TableSchema, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(schema.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )


def load_csv(
    path: str | Path,
    schema: TableSchema,
    missing_values: Sequence[str] = DEFAULT_MISSING_VALUES,
) -> DataTable:
    """Read a CSV file against a schema.

    The header must contain exactly the schema's column names, in any order;
    cells are re-ordered to schema order. Cells equal to any entry of
    ``missing_values`` become missing.

    Raises:
        DataError: missing file, header mismatch (lists missing and extra
            columns), row arity mismatch (reports the 1-based data row), or
            a target cell outside the schema's class labels.
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"CSV file not found: {p}")
    missing = set(missing_values)
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{p}: empty file, expected a header row") from None
        expected = set(schema.column_names)
        got = set(header)
        if got != expected or len(header) != len(set(header)):
            lacking = sorted(expected - got)
            extra = sorted(got - expected)
            raise DataError(
                f"{p}: header mismatch; missing columns {lacking}, "
                f"unexpected columns {extra}"
            )
        order = [header.index(name) for name in schema.column_names]
        rows: list[tuple[str | None, ...]] = []
        for r, raw in enumerate(reader, start=1):
            if len(raw) != len(header):
                raise DataError(
                    f"{p}: row {r} has {len(raw)} cells, expected {len(header)}"
                )
            rows.append(
                tuple(
                    None if raw[i] in missing else raw[i]
                    for i in order
                )
            )
    return DataTable(schema, tuple(rows))


def write_csv(
    table: DataTable, path: str | Path, missing_value: str = ""
) -> None:
    """Write a table as CSV in schema column order.

    Missing cells are written as ``missing_value``. A data cell whose text
    equals a missing sentinel is indistinguishable from missing after a
    round trip; callers that need the distinction must pick a sentinel that
    cannot occur as data.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.schema.column_names)
        for row in table.cells:
            writer.writerow([missing_value if c is None else c for c in row])
