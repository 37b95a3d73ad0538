"""Raw feature extraction: the eight per-file feature groups.

``extract_raw`` combines the parsed view of a file with format-agnostic
statistics into one JSON-ready record. The record's key order is part of
the wire format (see ``record_to_json``), so every group builder returns
its keys in that fixed order.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from typing import Any

import numpy as np

from .pe import ParsedPe, ParseStatus, entry_section, parse_pe

WINDOW = 2048
STEP = 1024

_APPEARED_RE = re.compile(r"^\d{4}-\d{2}$")
_PRINTABLE_RUN = re.compile(rb"[\x20-\x7f]{5,}")
# Occurrence scans run over the whole byte stream; lookaheads count
# overlapping matches.
_PATHS = re.compile(rb"(?=c:\\)", re.IGNORECASE)
_URLS = re.compile(rb"(?=https?://)", re.IGNORECASE)
_REGISTRY = re.compile(rb"(?=HKEY_)")
_MZ = re.compile(rb"(?=MZ)")

RECORD_KEYS = (
    "sha256",
    "appeared",
    "label",
    "general",
    "header",
    "imports",
    "exports",
    "section",
    "histogram",
    "byteentropy",
    "strings",
)


class SchemaError(ValueError):
    """A record violates the wire schema; ``group`` names the bad field."""

    def __init__(self, group: str, message: str):
        super().__init__(f"{group}: {message}")
        self.group = group


def byte_histogram(data: bytes) -> np.ndarray:
    """Counts of each byte value 0..255 (int64 array of length 256)."""
    return np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256).astype(np.int64)


def _window_entropy_bin(counts: list[int], length: int) -> int:
    # Entropy over the 16-symbol nibble distribution is at most 4 bits;
    # doubling rescales to the 0..8 range of full byte entropy, and bins
    # are half-bit wide (floor(2H), capped at 15 for maximal entropy).
    h = 0.0
    for c in counts:
        if c:
            p = c / length
            h -= p * math.log2(p)
    scaled = 2.0 * h
    return min(int(2.0 * scaled), 15)


def byte_entropy_histogram(data: bytes) -> np.ndarray:
    """Joint (window entropy, byte value) histogram, 16x16 bins flattened.

    Windows of 2048 bytes slide by 1024; a file shorter than one window is
    scored as a single whole-file window and an empty file yields zeros.
    Each byte in a window adds one count at (entropy bin, high nibble).
    """
    out = np.zeros((16, 16), dtype=np.int64)
    arr = np.frombuffer(data, dtype=np.uint8)
    n = len(arr)
    if n == 0:
        return out.reshape(256)
    nibbles = arr >> 4
    if n < WINDOW:
        starts = [0]
        length = n
    else:
        starts = range(0, n - WINDOW + 1, STEP)
        length = WINDOW
    for start in starts:
        counts = np.bincount(nibbles[start : start + length], minlength=16)
        out[_window_entropy_bin(counts.tolist(), length)] += counts
    return out.reshape(256)


def string_stats(data: bytes) -> dict[str, Any]:
    """Statistics over printable strings (runs of [0x20,0x7f] of length >= 5).

    ``paths``/``urls``/``registry``/``MZ`` count pattern occurrences over
    the entire byte stream, not only inside extracted strings.
    """
    runs = _PRINTABLE_RUN.findall(data)
    numstrings = len(runs)
    if numstrings:
        joined = np.frombuffer(b"".join(runs), dtype=np.uint8)
        dist = np.bincount(joined - 0x20, minlength=96).astype(np.int64)
        printables = int(dist.sum())
        avlength = printables / numstrings
        entropy = 0.0
        for c in dist.tolist():
            if c:
                p = c / printables
                entropy -= p * math.log2(p)
    else:
        dist = np.zeros(96, dtype=np.int64)
        printables = 0
        avlength = 0.0
        entropy = 0.0
    return {
        "numstrings": numstrings,
        "avlength": avlength,
        "printabledist": dist.tolist(),
        "printables": printables,
        "entropy": entropy,
        "paths": len(_PATHS.findall(data)),
        "urls": len(_URLS.findall(data)),
        "registry": len(_REGISTRY.findall(data)),
        "MZ": len(_MZ.findall(data)),
    }


def general_info(parsed: ParsedPe, data: bytes) -> dict[str, int]:
    """File size plus summary counts and presence flags from the headers."""
    return {
        "file_size": len(data),
        "vsize": parsed.optional.sizeof_image,
        "has_debug": int(parsed.has_debug),
        "exports": len(parsed.exports),
        "imports": sum(len(v) for v in parsed.imports.values()),
        "has_relocations": int(parsed.has_relocations),
        "has_resources": int(parsed.has_resources),
        "has_signature": int(parsed.has_signature),
        "has_tls": int(parsed.has_tls),
        "symbols": parsed.coff.num_symbols,
    }


def header_info(parsed: ParsedPe) -> dict[str, Any]:
    return {
        "coff": {
            "timestamp": parsed.coff.timestamp,
            "machine": parsed.coff.machine,
            "characteristics": list(parsed.coff.characteristics),
        },
        "optional": {
            "subsystem": parsed.optional.subsystem,
            "dll_characteristics": list(parsed.optional.dll_characteristics),
            "magic": parsed.optional.magic,
            "major_image_version": parsed.optional.major_image_version,
            "minor_image_version": parsed.optional.minor_image_version,
            "major_linker_version": parsed.optional.major_linker_version,
            "minor_linker_version": parsed.optional.minor_linker_version,
            "major_operating_system_version": parsed.optional.major_operating_system_version,
            "minor_operating_system_version": parsed.optional.minor_operating_system_version,
            "major_subsystem_version": parsed.optional.major_subsystem_version,
            "minor_subsystem_version": parsed.optional.minor_subsystem_version,
            "sizeof_code": parsed.optional.sizeof_code,
            "sizeof_headers": parsed.optional.sizeof_headers,
            "sizeof_heap_commit": parsed.optional.sizeof_heap_commit,
        },
    }


def section_info(parsed: ParsedPe) -> dict[str, Any]:
    return {
        "entry": entry_section(parsed),
        "sections": [
            {
                "name": s.name,
                "size": s.size,
                "entropy": s.entropy,
                "vsize": s.vsize,
                "props": list(s.props),
            }
            for s in parsed.sections
        ],
    }


def extract_raw_with_status(
    data: bytes, appeared: str, label: int
) -> tuple[dict[str, Any], ParseStatus]:
    """Build the full raw-feature record plus the parse status it came from."""
    if not isinstance(appeared, str) or not _APPEARED_RE.match(appeared):
        raise ValueError("appeared must match YYYY-MM, got %r" % (appeared,))
    if label not in (-1, 0, 1):
        raise ValueError("label must be -1, 0 or 1, got %r" % (label,))

    parsed = parse_pe(data)
    record = {
        "sha256": hashlib.sha256(data).hexdigest(),
        "appeared": appeared,
        "label": label,
        "general": general_info(parsed, data),
        "header": header_info(parsed),
        "imports": {lib: list(fns) for lib, fns in parsed.imports.items()},
        "exports": list(parsed.exports),
        "section": section_info(parsed),
        "histogram": byte_histogram(data).tolist(),
        "byteentropy": byte_entropy_histogram(data).tolist(),
        "strings": string_stats(data),
    }
    return record, parsed.parse_status


def extract_raw(data: bytes, appeared: str, label: int) -> dict[str, Any]:
    """One JSON-ready record: identity fields plus the eight feature groups."""
    record, _ = extract_raw_with_status(data, appeared, label)
    return record


def record_to_json(record: dict[str, Any]) -> str:
    """Serialize a record to its canonical one-line JSON form."""
    return json.dumps(record, separators=(",", ":"))


def _expect_keys(group: str, obj: Any, keys: tuple[str, ...]) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(group, "expected an object")
    if set(obj.keys()) != set(keys):
        missing = set(keys) - set(obj.keys())
        extra = set(obj.keys()) - set(keys)
        raise SchemaError(group, f"bad keys (missing {sorted(missing)}, extra {sorted(extra)})")


def _expect_counts(group: str, value: Any, length: int) -> None:
    if (
        not isinstance(value, list)
        or len(value) != length
        or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in value)
    ):
        raise SchemaError(group, f"expected {length} non-negative integers")


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_record(record: dict[str, Any]) -> None:
    """Check a record against the wire schema; raise SchemaError on violation."""
    _expect_keys("record", record, RECORD_KEYS)
    sha = record["sha256"]
    if not (isinstance(sha, str) and len(sha) == 64 and all(c in "0123456789abcdef" for c in sha)):
        raise SchemaError("sha256", "expected 64 lowercase hex characters")
    if not (isinstance(record["appeared"], str) and _APPEARED_RE.match(record["appeared"])):
        raise SchemaError("appeared", "expected YYYY-MM")
    if record["label"] not in (-1, 0, 1):
        raise SchemaError("label", "expected -1, 0 or 1")

    general = record["general"]
    _expect_keys(
        "general",
        general,
        (
            "file_size",
            "vsize",
            "has_debug",
            "exports",
            "imports",
            "has_relocations",
            "has_resources",
            "has_signature",
            "has_tls",
            "symbols",
        ),
    )
    for key, value in general.items():
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
            raise SchemaError("general", f"{key} must be a non-negative integer")
        if key.startswith("has_") and value not in (0, 1):
            raise SchemaError("general", f"{key} must be 0 or 1")

    header = record["header"]
    _expect_keys("header", header, ("coff", "optional"))
    _expect_keys("header.coff", header["coff"], ("timestamp", "machine", "characteristics"))
    coff = header["coff"]
    if not (isinstance(coff["timestamp"], int) and coff["timestamp"] >= 0):
        raise SchemaError("header", "coff.timestamp must be a non-negative integer")
    if not isinstance(coff["machine"], str):
        raise SchemaError("header", "coff.machine must be a string")
    if not (
        isinstance(coff["characteristics"], list)
        and all(isinstance(c, str) for c in coff["characteristics"])
    ):
        raise SchemaError("header", "coff.characteristics must be a list of strings")
    _expect_keys(
        "header.optional",
        header["optional"],
        (
            "subsystem",
            "dll_characteristics",
            "magic",
            "major_image_version",
            "minor_image_version",
            "major_linker_version",
            "minor_linker_version",
            "major_operating_system_version",
            "minor_operating_system_version",
            "major_subsystem_version",
            "minor_subsystem_version",
            "sizeof_code",
            "sizeof_headers",
            "sizeof_heap_commit",
        ),
    )
    optional = header["optional"]
    for key, value in optional.items():
        if key in ("subsystem", "magic"):
            if not isinstance(value, str):
                raise SchemaError("header", f"optional.{key} must be a string")
        elif key == "dll_characteristics":
            if not (isinstance(value, list) and all(isinstance(c, str) for c in value)):
                raise SchemaError("header", "optional.dll_characteristics must be strings")
        elif not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
            raise SchemaError("header", f"optional.{key} must be a non-negative integer")

    imports = record["imports"]
    if not isinstance(imports, dict):
        raise SchemaError("imports", "expected an object")
    for lib, functions in imports.items():
        if not isinstance(lib, str):
            raise SchemaError("imports", "library names must be strings")
        if not (isinstance(functions, list) and all(isinstance(f, str) for f in functions)):
            raise SchemaError("imports", f"functions of {lib!r} must be a list of strings")

    exports = record["exports"]
    if not (isinstance(exports, list) and all(isinstance(e, str) for e in exports)):
        raise SchemaError("exports", "expected a list of strings")

    section = record["section"]
    _expect_keys("section", section, ("entry", "sections"))
    if not isinstance(section["entry"], str):
        raise SchemaError("section", "entry must be a string")
    if not isinstance(section["sections"], list):
        raise SchemaError("section", "sections must be a list")
    for s in section["sections"]:
        _expect_keys("section", s, ("name", "size", "entropy", "vsize", "props"))
        if not isinstance(s["name"], str):
            raise SchemaError("section", "section name must be a string")
        for key in ("size", "vsize"):
            if not (isinstance(s[key], int) and not isinstance(s[key], bool) and s[key] >= 0):
                raise SchemaError("section", f"section {key} must be a non-negative integer")
        if not _is_number(s["entropy"]):
            raise SchemaError("section", "section entropy must be a number")
        if not (isinstance(s["props"], list) and all(isinstance(p, str) for p in s["props"])):
            raise SchemaError("section", "section props must be a list of strings")

    _expect_counts("histogram", record["histogram"], 256)
    _expect_counts("byteentropy", record["byteentropy"], 256)

    strings = record["strings"]
    _expect_keys(
        "strings",
        strings,
        (
            "numstrings",
            "avlength",
            "printabledist",
            "printables",
            "entropy",
            "paths",
            "urls",
            "registry",
            "MZ",
        ),
    )
    for key in ("numstrings", "printables", "paths", "urls", "registry", "MZ"):
        value = strings[key]
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
            raise SchemaError("strings", f"{key} must be a non-negative integer")
    for key in ("avlength", "entropy"):
        if not _is_number(strings[key]):
            raise SchemaError("strings", f"{key} must be a number")
    _expect_counts("strings", strings["printabledist"], 96)
