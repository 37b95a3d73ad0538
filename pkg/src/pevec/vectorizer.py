"""Fixed-layout conversion of raw-feature records into model vectors.

The vector concatenates one block per feature group, in the records' own
group order, for a total dimension of 2351. Count histograms are
normalized to distributions; string tokens enter through the signed
feature-hashing sketches in ``hashing``.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .features import validate_record
from .hashing import hash_pairs, hash_strings

DIM = 2351

# (block, length) in vector order. Sub-block sizes: header is
# 1 + 5 sketches of 10 + 11 scalars; imports is 256 library bins +
# 1024 library:function bins; section is 5 scalars + 5 sketches of 50.
LAYOUT = (
    ("general", 10),
    ("header", 62),
    ("imports", 1280),
    ("exports", 128),
    ("section", 255),
    ("histogram", 256),
    ("byteentropy", 256),
    ("strings", 104),
)


def layout_manifest() -> dict[str, list[int]]:
    """Block name -> [start, length] map describing the vector layout."""
    manifest = {}
    start = 0
    for name, length in LAYOUT:
        manifest[name] = [start, length]
        start += length
    return manifest


def _ascii_lower(s: str) -> str:
    # Case folding limited to A-Z so arbitrary high bytes survive untouched.
    return "".join(chr(ord(c) + 32) if "A" <= c <= "Z" else c for c in s)


def _general_block(general: dict[str, int]) -> np.ndarray:
    return np.array(
        [
            general["file_size"],
            general["vsize"],
            general["has_debug"],
            general["exports"],
            general["imports"],
            general["has_relocations"],
            general["has_resources"],
            general["has_signature"],
            general["has_tls"],
            general["symbols"],
        ],
        dtype=np.float64,
    )


def _header_block(header: dict[str, Any]) -> np.ndarray:
    coff = header["coff"]
    optional = header["optional"]
    return np.concatenate(
        [
            [coff["timestamp"]],
            hash_strings([coff["machine"]], 10),
            hash_strings(coff["characteristics"], 10),
            hash_strings([optional["subsystem"]], 10),
            hash_strings(optional["dll_characteristics"], 10),
            hash_strings([optional["magic"]], 10),
            [
                optional["major_image_version"],
                optional["minor_image_version"],
                optional["major_linker_version"],
                optional["minor_linker_version"],
                optional["major_operating_system_version"],
                optional["minor_operating_system_version"],
                optional["major_subsystem_version"],
                optional["minor_subsystem_version"],
                optional["sizeof_code"],
                optional["sizeof_headers"],
                optional["sizeof_heap_commit"],
            ],
        ]
    )


def _imports_block(imports: dict[str, list[str]]) -> np.ndarray:
    libraries = {_ascii_lower(lib) for lib in imports}
    pairs = [
        _ascii_lower(lib) + ":" + fn for lib, functions in imports.items() for fn in functions
    ]
    return np.concatenate([hash_strings(sorted(libraries), 256), hash_strings(pairs, 1024)])


def _section_block(section: dict[str, Any]) -> np.ndarray:
    sections = section["sections"]
    entry = section["entry"]
    summary = [
        len(sections),
        sum(1 for s in sections if s["size"] == 0),
        sum(1 for s in sections if s["name"] == ""),
        sum(1 for s in sections if "MEM_READ" in s["props"] and "MEM_EXECUTE" in s["props"]),
        sum(1 for s in sections if "MEM_WRITE" in s["props"]),
    ]
    entry_props = [p for s in sections if s["name"] == entry for p in s["props"]]
    return np.concatenate(
        [
            summary,
            hash_pairs(((s["name"], s["size"]) for s in sections), 50),
            hash_pairs(((s["name"], s["entropy"]) for s in sections), 50),
            hash_pairs(((s["name"], s["vsize"]) for s in sections), 50),
            hash_strings([entry], 50),
            hash_strings(entry_props, 50),
        ]
    )


def _distribution(counts: list[int]) -> np.ndarray:
    arr = np.asarray(counts, dtype=np.float64)
    total = arr.sum()
    return arr / total if total > 0 else arr


def _strings_block(strings: dict[str, Any]) -> np.ndarray:
    printables = strings["printables"]
    dist = np.asarray(strings["printabledist"], dtype=np.float64)
    dist = dist / printables if printables > 0 else dist
    return np.concatenate(
        [
            [strings["numstrings"], strings["avlength"]],
            dist,
            [
                strings["printables"],
                strings["entropy"],
                strings["paths"],
                strings["urls"],
                strings["registry"],
                strings["MZ"],
            ],
        ]
    )


def vectorize(record: dict[str, Any]) -> np.ndarray:
    """Map one schema-valid record to its 2351-element float32 vector."""
    validate_record(record)
    vec = np.concatenate(
        [
            _general_block(record["general"]),
            _header_block(record["header"]),
            _imports_block(record["imports"]),
            hash_strings(record["exports"], 128),
            _section_block(record["section"]),
            _distribution(record["histogram"]),
            _distribution(record["byteentropy"]),
            _strings_block(record["strings"]),
        ]
    ).astype(np.float32)
    assert vec.shape == (DIM,)
    return vec
