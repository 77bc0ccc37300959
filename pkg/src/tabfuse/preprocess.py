"""Fit/transform pipeline for mixed numeric and categorical columns.

Fitting learns, per column, everything needed to turn unseen raw rows into
model-ready arrays:

* numeric columns: mean and population standard deviation over non-missing
  parsed values (missing cells impute to the mean, then z-score; a constant
  column maps to 0 instead of dividing by zero),
* categorical columns: the modal raw value (imputation), a vocabulary of
  lowercase tokens, and the maximum token count seen (pad length).

Tokenization is lowercase followed by splitting on any run of characters
that is not a letter or a digit (underscore counts as a delimiter). Index 0
is reserved for padding and index 1 for tokens unseen at fit time, so
vocabulary indices start at 2. At transform time each column's indices are
shifted by a per-column offset, giving disjoint index ranges across columns
so a single embedding table can serve every column; padding stays index 0
globally. Cells longer than the fitted pad length are truncated to the
first ``pad_length`` tokens.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaMismatchError
from .schema import DataTable, TableSchema

logger = logging.getLogger(__name__)

PAD_INDEX = 0
UNKNOWN_INDEX = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

STATE_FORMAT_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on runs of non-letter/non-digit characters."""
    return _TOKEN_RE.findall(text.lower())


def _parse_float(text: str) -> float | None:
    try:
        value = float(text.strip())
    except ValueError:
        return None
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class NumericStats:
    """Per numeric column: fitted mean and population standard deviation."""

    columns: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    @property
    def constant_columns(self) -> tuple[str, ...]:
        return tuple(c for c, s in zip(self.columns, self.stds) if s == 0.0)


@dataclass(frozen=True)
class ColumnVocabulary:
    """Per categorical column: token index map, pad length, and mode.

    ``token_to_index`` maps lowercase tokens to local indices starting at 2;
    0 is padding and 1 means unknown. ``pad_length`` is the maximum token
    count observed in a cell at fit time, at least 1.
    """

    token_to_index: dict[str, int]
    pad_length: int
    mode_value: str

    @property
    def size(self) -> int:
        """Local index range: pad + unknown + vocabulary."""
        return len(self.token_to_index) + 2


@dataclass(frozen=True)
class PreprocessState:
    """Everything needed to transform unseen rows of a fitted schema."""

    schema: TableSchema
    numeric_stats: NumericStats
    vocabularies: dict[str, ColumnVocabulary]
    label_map: dict[str, int]

    @property
    def categorical_columns(self) -> tuple[str, ...]:
        return self.schema.categorical_feature_names

    @property
    def numeric_columns(self) -> tuple[str, ...]:
        return self.schema.numeric_feature_names

    @property
    def total_padded_width(self) -> int:
        return sum(v.pad_length for v in self.vocabularies.values())

    def column_offsets(self) -> dict[str, int]:
        """Base offset of each column's disjoint global index block."""
        offsets = {}
        base = 0
        for name in self.categorical_columns:
            offsets[name] = base
            base += self.vocabularies[name].size
        return offsets

    @property
    def total_vocab_size(self) -> int:
        return sum(v.size for v in self.vocabularies.values())

    def to_json_dict(self) -> dict:
        return {
            "format_version": STATE_FORMAT_VERSION,
            "schema": self.schema.to_json_dict(),
            "numeric_stats": {
                "columns": list(self.numeric_stats.columns),
                "means": list(self.numeric_stats.means),
                "stds": list(self.numeric_stats.stds),
            },
            "vocabularies": {
                name: {
                    "token_to_index": voc.token_to_index,
                    "pad_length": voc.pad_length,
                    "mode_value": voc.mode_value,
                }
                for name, voc in self.vocabularies.items()
            },
            "label_map": self.label_map,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PreprocessState":
        version = doc.get("format_version")
        if version != STATE_FORMAT_VERSION:
            raise DataError(
                f"unsupported preprocess state version {version!r}; "
                f"this build reads version {STATE_FORMAT_VERSION}"
            )
        schema = TableSchema.from_json_dict(doc["schema"])
        ns = doc["numeric_stats"]
        stats = NumericStats(
            tuple(ns["columns"]), tuple(ns["means"]), tuple(ns["stds"])
        )
        vocabularies = {
            name: ColumnVocabulary(
                dict(v["token_to_index"]), int(v["pad_length"]), v["mode_value"]
            )
            for name, v in doc["vocabularies"].items()
        }
        return cls(schema, stats, vocabularies, dict(doc["label_map"]))

    def fingerprint(self) -> str:
        canonical = json.dumps(
            self.to_json_dict(), sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_state(state: PreprocessState, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(state.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )


def load_state(path: str | Path) -> PreprocessState:
    p = Path(path)
    if not p.exists():
        raise DataError(f"preprocess state file not found: {p}")
    return PreprocessState.from_json_dict(json.loads(p.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class EncodedDataset:
    """Model-ready arrays: standardized numerics, padded token indices, labels.

    ``labels`` holds class indices; -1 marks a row whose target cell was
    missing (prediction-only input). ``row_indices`` point back into the
    table the arrays came from, so raw-value views (e.g. frequency encoding)
    can be built for the same rows.
    """

    numeric: np.ndarray
    tokens: np.ndarray
    labels: np.ndarray
    row_indices: np.ndarray

    def __post_init__(self):
        if self.numeric.shape[0] != self.tokens.shape[0] or self.numeric.shape[
            0
        ] != len(self.labels):
            raise DataError("encoded arrays disagree on row count")

    @property
    def n_rows(self) -> int:
        return self.numeric.shape[0]

    def subset(self, indices: np.ndarray) -> "EncodedDataset":
        idx = np.asarray(indices)
        return EncodedDataset(
            self.numeric[idx],
            self.tokens[idx],
            self.labels[idx],
            self.row_indices[idx],
        )


def fit(table: DataTable) -> PreprocessState:
    """Learn imputation, scaling, and vocabulary state from a table.

    Every column must contain at least one non-missing value. Numeric cells
    that fail to parse (or parse non-finite) count as missing and are
    reported in a warning. Mode ties break to the lexicographically smallest
    value so fitting is deterministic.
    """
    schema = table.schema
    num_names = []
    means = []
    stds = []
    for name in schema.numeric_feature_names:
        raw = table.column(name)
        values = []
        bad = 0
        for cell in raw:
            if cell is None:
                continue
            v = _parse_float(cell)
            if v is None:
                bad += 1
            else:
                values.append(v)
        if bad:
            logger.warning(
                "column %r: %d non-numeric cell(s) treated as missing", name, bad
            )
        if not values:
            raise DataError(f"column {name!r} has no usable values to fit on")
        arr = np.asarray(values, dtype=np.float64)
        num_names.append(name)
        means.append(float(arr.mean()))
        stds.append(float(arr.std()))

    vocabularies: dict[str, ColumnVocabulary] = {}
    for name in schema.categorical_feature_names:
        raw = [c for c in table.column(name) if c is not None]
        if not raw:
            raise DataError(f"column {name!r} has no usable values to fit on")
        counts = Counter(raw)
        top = max(counts.values())
        mode_value = min(v for v, n in counts.items() if n == top)
        tokens: set[str] = set()
        pad_length = 1
        for cell in raw:
            cell_tokens = tokenize(cell)
            tokens.update(cell_tokens)
            pad_length = max(pad_length, len(cell_tokens))
        token_to_index = {t: i + 2 for i, t in enumerate(sorted(tokens))}
        vocabularies[name] = ColumnVocabulary(token_to_index, pad_length, mode_value)

    target_cells = [c for c in table.column(schema.target) if c is not None]
    if not target_cells:
        raise DataError(f"target column {schema.target!r} is entirely missing")

    label_map = {label: i for i, label in enumerate(schema.class_labels)}
    stats = NumericStats(tuple(num_names), tuple(means), tuple(stds))
    return PreprocessState(schema, stats, vocabularies, label_map)


def _encode_cell(
    cell: str | None, voc: ColumnVocabulary
) -> list[int]:
    if cell is None:
        cell = voc.mode_value
    toks = tokenize(cell)[: voc.pad_length]
    idx = [voc.token_to_index.get(t, UNKNOWN_INDEX) for t in toks]
    idx.extend([PAD_INDEX] * (voc.pad_length - len(idx)))
    return idx


def transform(table: DataTable, state: PreprocessState) -> EncodedDataset:
    """Apply a fitted state to a table; rows are processed independently.

    Missing numerics impute to the fitted mean and standardize to 0;
    constant columns standardize to 0 everywhere. Missing categoricals
    impute to the fitted mode; unseen tokens map to the unknown index.
    Rows whose target cell is missing get label -1.
    """
    if table.schema != state.schema:
        raise SchemaMismatchError(
            "table schema differs from the schema the state was fitted on"
        )
    n_rows = table.row_count

    numeric = np.zeros((n_rows, len(state.numeric_columns)), dtype=np.float64)
    for j, name in enumerate(state.numeric_columns):
        mean = state.numeric_stats.means[j]
        std = state.numeric_stats.stds[j]
        raw = table.column(name)
        bad = 0
        col = np.empty(n_rows, dtype=np.float64)
        for r, cell in enumerate(raw):
            if cell is None:
                col[r] = mean
                continue
            v = _parse_float(cell)
            if v is None:
                bad += 1
                col[r] = mean
            else:
                col[r] = v
        if bad:
            logger.warning(
                "column %r: %d non-numeric cell(s) imputed to the mean", name, bad
            )
        numeric[:, j] = (col - mean) / std if std > 0.0 else 0.0

    offsets = state.column_offsets()
    tokens = np.zeros((n_rows, state.total_padded_width), dtype=np.int64)
    start = 0
    for name in state.categorical_columns:
        voc = state.vocabularies[name]
        base = offsets[name]
        raw = table.column(name)
        block = np.zeros((n_rows, voc.pad_length), dtype=np.int64)
        for r, cell in enumerate(raw):
            local = _encode_cell(cell, voc)
            for s, ix in enumerate(local):
                block[r, s] = 0 if ix == PAD_INDEX else base + ix
        tokens[:, start : start + voc.pad_length] = block
        start += voc.pad_length

    labels = np.full(n_rows, -1, dtype=np.int64)
    for r, cell in enumerate(table.column(state.schema.target)):
        if cell is not None:
            labels[r] = state.label_map[cell]

    return EncodedDataset(numeric, tokens, labels, np.arange(n_rows, dtype=np.int64))


def stratified_split(
    data: EncodedDataset,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[EncodedDataset, EncodedDataset, EncodedDataset]:
    """Partition rows into train/val/test preserving class proportions.

    Per class, counts are allocated by largest remainder, so each split's
    class count is the floor or ceil of the exact proportional share. The
    three splits are disjoint and exhaustive, and the result depends only on
    the data and the seed.

    Raises:
        DataError: fractions not positive or not summing to 1, rows with
            missing labels, or a present class with fewer than 3 members.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if len(fr) != 3:
        raise DataError("fractions must be (train, val, test)")
    if np.any(fr <= 0):
        raise DataError("split fractions must all be positive")
    if abs(float(fr.sum()) - 1.0) > 1e-9:
        raise DataError(f"split fractions sum to {float(fr.sum())}, expected 1")
    labels = data.labels
    if np.any(labels < 0):
        raise DataError("cannot split rows with missing labels")

    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for cls in np.unique(labels):
        members = np.nonzero(labels == cls)[0]
        if len(members) < 3:
            raise DataError(
                f"class index {int(cls)} has only {len(members)} member(s); "
                f"need at least 3 to appear in all splits"
            )
        members = rng.permutation(members)
        share = len(members) * fr
        counts = np.floor(share).astype(np.int64)
        deficit = len(members) - int(counts.sum())
        order = np.lexsort((np.arange(3), -(share - counts)))
        counts[order[:deficit]] += 1
        stops = np.cumsum(counts)
        parts[0].append(members[: stops[0]])
        parts[1].append(members[stops[0] : stops[1]])
        parts[2].append(members[stops[1] :])

    splits = []
    for chunks in parts:
        idx = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, np.int64)
        splits.append(data.subset(idx))
    return splits[0], splits[1], splits[2]
