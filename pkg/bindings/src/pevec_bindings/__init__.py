"""In-process bindings for data-science workflows.

Thin wrappers over the installed ``pevec`` package: extraction returns
the canonical one-line JSON text and vectorization returns a contiguous
float32 array, both bit-identical to what the ``pevec`` CLI writes for
the same input. No feature logic lives here.
"""

from __future__ import annotations

import json

import numpy as np

from pevec.features import SchemaError, extract_raw, record_to_json
from pevec.vectorizer import vectorize

__version__ = "0.1.0"

__all__ = ["BoundExtractor", "SchemaError", "extract_raw_json", "vectorize_json"]


def extract_raw_json(file_bytes: bytes, appeared: str, label: int) -> str:
    """Raw-feature record for one file, serialized as canonical JSON."""
    return record_to_json(extract_raw(file_bytes, appeared, label))


def vectorize_json(json_text: str) -> np.ndarray:
    """2351-element float32 vector for one serialized record.

    Schema violations raise ``SchemaError`` with the offending group in
    ``.group``; the returned array is C-contiguous.
    """
    try:
        record = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaError("record", f"invalid JSON: {exc.msg}") from exc
    return np.ascontiguousarray(vectorize(record), dtype=np.float32)


class BoundExtractor:
    """Handle bundling both operations for callers that want an object."""

    def extract_raw_json(self, file_bytes: bytes, appeared: str, label: int) -> str:
        return extract_raw_json(file_bytes, appeared, label)

    def vectorize_json(self, json_text: str) -> np.ndarray:
        return vectorize_json(json_text)
