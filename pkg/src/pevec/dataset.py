"""Dataset plumbing: JSON-lines shards, statistics, and binary matrices.

Feature matrices are stored in a little-endian binary format: magic
``EMBV``, u32 format version, u64 row count, u32 column count, then
float32 values row-major. Labels live in a companion file: magic
``EMBL``, u32 version, u64 row count, then one signed byte per row.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from .features import SchemaError, record_to_json, validate_record
from .vectorizer import DIM, vectorize

MATRIX_MAGIC = b"EMBV"
LABELS_MAGIC = b"EMBL"
FORMAT_VERSION = 1

_MATRIX_HEADER = struct.Struct("<4sIQI")
_LABELS_HEADER = struct.Struct("<4sIQ")


class DataError(Exception):
    """A shard or binary file is unreadable or violates its format."""


@dataclass
class JsonlError:
    """A line that failed to parse or validate, kept with its position."""

    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class DatasetStats:
    total: int = 0
    by_label: dict[int, int] = field(default_factory=lambda: {-1: 0, 0: 0, 1: 0})
    by_month: dict[str, int] = field(default_factory=dict)

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "labels": {
                "benign": self.by_label[0],
                "malicious": self.by_label[1],
                "unlabeled": self.by_label[-1],
            },
            "months": {m: self.by_month[m] for m in sorted(self.by_month)},
        }


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any] | JsonlError]]:
    """Stream (line number, record-or-error) pairs from a JSONL shard.

    Lines are numbered from 1; every malformed line is reported in place
    so callers decide whether to skip or abort.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, JsonlError(lineno, f"invalid JSON: {exc.msg}")
                continue
            try:
                validate_record(record)
            except SchemaError as exc:
                yield lineno, JsonlError(lineno, str(exc))
                continue
            yield lineno, record


def write_jsonl(records: Iterable[dict[str, Any]], path: str | Path) -> int:
    """Write records one JSON object per line; returns the row count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_json(record))
            fh.write("\n")
            count += 1
    return count


def dataset_stats(paths: Iterable[str | Path]) -> DatasetStats:
    """Exact label and month tallies over one or more shards."""
    stats = DatasetStats()
    for path in paths:
        for lineno, item in read_jsonl(path):
            if isinstance(item, JsonlError):
                raise DataError(f"{path}: {item}")
            stats.total += 1
            stats.by_label[item["label"]] += 1
            month = item["appeared"]
            stats.by_month[month] = stats.by_month.get(month, 0) + 1
    return stats


class MatrixWriter:
    """Streams float32 rows to an EMBV file plus labels to an EMBL file."""

    def __init__(self, matrix_path: str | Path, labels_path: str | Path, cols: int = DIM):
        self.cols = cols
        self.rows = 0
        self._mat = open(matrix_path, "wb")
        self._lab = open(labels_path, "wb")
        self._mat.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, 0, cols))
        self._lab.write(_LABELS_HEADER.pack(LABELS_MAGIC, FORMAT_VERSION, 0))

    def append(self, vector: np.ndarray, label: int) -> None:
        row = np.ascontiguousarray(vector, dtype=np.float32)
        if row.shape != (self.cols,):
            raise DataError(f"expected {self.cols} columns, got shape {row.shape}")
        self._mat.write(row.tobytes())
        self._lab.write(struct.pack("<b", label))
        self.rows += 1

    def close(self) -> None:
        # Row counts are back-patched so rows can stream through.
        self._mat.seek(0)
        self._mat.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, self.rows, self.cols))
        self._mat.close()
        self._lab.seek(0)
        self._lab.write(_LABELS_HEADER.pack(LABELS_MAGIC, FORMAT_VERSION, self.rows))
        self._lab.close()

    def __enter__(self) -> "MatrixWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def to_matrix(
    shards: Iterable[str | Path],
    matrix_path: str | Path,
    labels_path: str | Path,
    include_unlabeled: bool = False,
) -> int:
    """Vectorize shards into an EMBV/EMBL pair; returns the row count.

    Rows follow input order. Unlabeled records (label -1) are skipped
    unless ``include_unlabeled``; malformed lines abort with context.
    """
    with MatrixWriter(matrix_path, labels_path) as writer:
        for path in shards:
            for lineno, item in read_jsonl(path):
                if isinstance(item, JsonlError):
                    raise DataError(f"{path}: {item}")
                if item["label"] == -1 and not include_unlabeled:
                    continue
                try:
                    vector = vectorize(item)
                except SchemaError as exc:
                    raise DataError(
                        f"{path}: line {lineno}, sha256 {item.get('sha256', '?')}: {exc}"
                    ) from exc
                writer.append(vector, item["label"])
        return writer.rows


def read_matrix(path: str | Path) -> np.ndarray:
    """Load an EMBV file as an (rows, cols) float32 array."""
    with open(path, "rb") as fh:
        header = fh.read(_MATRIX_HEADER.size)
        if len(header) != _MATRIX_HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, rows, cols = _MATRIX_HEADER.unpack(header)
        if magic != MATRIX_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        payload = fh.read(rows * cols * 4)
        if len(payload) != rows * cols * 4:
            raise DataError(f"{path}: truncated matrix body")
        return np.frombuffer(payload, dtype="<f4").reshape(rows, cols)


def read_labels(path: str | Path) -> np.ndarray:
    """Load an EMBL file as an int8 label array."""
    with open(path, "rb") as fh:
        header = fh.read(_LABELS_HEADER.size)
        if len(header) != _LABELS_HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, rows = _LABELS_HEADER.unpack(header)
        if magic != LABELS_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        payload = fh.read(rows)
        if len(payload) != rows:
            raise DataError(f"{path}: truncated label body")
        return np.frombuffer(payload, dtype=np.int8)
