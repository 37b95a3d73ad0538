"""Hand-assembled PE files for tests.

Every structure is written byte by byte from the published format layout
(DOS header, PE signature, COFF header, optional header, data
directories, section table, import/export tables), so parsed values can
be asserted against exactly what was written. Also provides the
synthetic benign/malicious corpus used by the end-to-end pipeline tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FILE_ALIGN = 0x200
SECT_ALIGN = 0x1000

# Section characteristic bits.
CNT_CODE = 0x00000020
CNT_INITIALIZED_DATA = 0x00000040
MEM_EXECUTE = 0x20000000
MEM_READ = 0x40000000
MEM_WRITE = 0x80000000


def align_up(x: int, a: int) -> int:
    return (x + a - 1) // a * a


@dataclass
class SectionSpec:
    name: bytes
    data: bytes
    characteristics: int
    vsize: int | None = None  # defaults to len(data)

    @property
    def virtual_size(self) -> int:
        return self.vsize if self.vsize is not None else len(self.data)


def _layout_imports(imports: dict[str, list[str | int]], plus: bool) -> tuple[int, dict]:
    """Relative offsets of every import structure within its section."""
    esz = 8 if plus else 4
    libs = list(imports)
    off = (len(libs) + 1) * 20
    ilt, iat, hints, dllnames = {}, {}, {}, {}
    for lib in libs:
        ilt[lib] = off
        off += (len(imports[lib]) + 1) * esz
    for lib in libs:
        iat[lib] = off
        off += (len(imports[lib]) + 1) * esz
    for lib in libs:
        for j, imp in enumerate(imports[lib]):
            if isinstance(imp, str):
                hints[(lib, j)] = off
                off += 2 + len(imp.encode()) + 1
                off += off & 1  # hint/name entries are 2-aligned
    for lib in libs:
        dllnames[lib] = off
        off += len(lib.encode()) + 1
    return off, {"ilt": ilt, "iat": iat, "hints": hints, "dllnames": dllnames}


def _build_imports(imports: dict[str, list[str | int]], va: int, plus: bool) -> bytes:
    size, offs = _layout_imports(imports, plus)
    esz = 8 if plus else 4
    ordinal_flag = 1 << 63 if plus else 1 << 31
    pack_entry = "<Q" if plus else "<I"
    buf = bytearray(size)

    for i, (lib, imps) in enumerate(imports.items()):
        struct.pack_into(
            "<IIIII",
            buf,
            i * 20,
            va + offs["ilt"][lib],
            0,
            0,
            va + offs["dllnames"][lib],
            va + offs["iat"][lib],
        )
        for j, imp in enumerate(imps):
            if isinstance(imp, int):
                entry = ordinal_flag | (imp & 0xFFFF)
            else:
                entry = va + offs["hints"][(lib, j)]
            struct.pack_into(pack_entry, buf, offs["ilt"][lib] + j * esz, entry)
            struct.pack_into(pack_entry, buf, offs["iat"][lib] + j * esz, entry)
        # trailing zero thunks already present (buffer is zero-filled)
        name = lib.encode()
        buf[offs["dllnames"][lib] : offs["dllnames"][lib] + len(name)] = name
        for j, imp in enumerate(imps):
            if isinstance(imp, str):
                base = offs["hints"][(lib, j)]
                raw = imp.encode()
                buf[base + 2 : base + 2 + len(raw)] = raw
    return bytes(buf)


def _build_exports(exports: list[str], va: int, module_name: bytes = b"module.dll") -> bytes:
    n = len(exports)
    off_funcs = 40
    off_names = off_funcs + 4 * n
    off_ords = off_names + 4 * n
    off_strings = off_ords + 2 * n
    name_offsets = []
    off = off_strings
    for name in exports:
        name_offsets.append(off)
        off += len(name.encode()) + 1
    off_module = off
    total = off_module + len(module_name) + 1

    buf = bytearray(total)
    struct.pack_into(
        "<IIHHIIIIIII",
        buf,
        0,
        0,  # characteristics
        0,  # timestamp
        0,
        0,  # version
        va + off_module,
        1,  # ordinal base
        n,  # number of functions
        n,  # number of names
        va + off_funcs,
        va + off_names,
        va + off_ords,
    )
    for j, name in enumerate(exports):
        struct.pack_into("<I", buf, off_funcs + 4 * j, 0x1000 + j)
        struct.pack_into("<I", buf, off_names + 4 * j, va + name_offsets[j])
        struct.pack_into("<H", buf, off_ords + 2 * j, j)
        raw = name.encode()
        buf[name_offsets[j] : name_offsets[j] + len(raw)] = raw
    buf[off_module : off_module + len(module_name)] = module_name
    return bytes(buf)


def build_pe(
    sections: list[SectionSpec],
    imports: dict[str, list[str | int]] | None = None,
    exports: list[str] | None = None,
    *,
    plus: bool = False,
    machine: int = 0x014C,
    timestamp: int = 0,
    coff_characteristics: int = 0x0102,
    num_symbols: int = 0,
    subsystem: int = 3,
    dll_characteristics: int = 0x8140,
    linker: tuple[int, int] = (11, 0),
    image_version: tuple[int, int] = (1, 2),
    os_version: tuple[int, int] = (6, 0),
    subsystem_version: tuple[int, int] = (6, 0),
    heap_commit: int = 0x1000,
    entry_rva: int | None = None,
    extra_dirs: dict[int, int] | None = None,
    dos_stub: bytes = b"",
) -> tuple[bytes, dict]:
    """Assemble a PE image; returns (bytes, ground-truth layout info)."""
    sections = list(sections)

    # Virtual addresses for payload sections, then import/export sections.
    va = SECT_ALIGN
    vas = []
    for s in sections:
        vas.append(va)
        va = align_up(va + max(s.virtual_size, len(s.data), 1), SECT_ALIGN)

    if imports:
        import_va = va
        import_data = _build_imports(imports, import_va, plus)
        import_dir_size = (len(imports) + 1) * 20
        sections.append(
            SectionSpec(b".idata", import_data, CNT_INITIALIZED_DATA | MEM_READ | MEM_WRITE)
        )
        vas.append(import_va)
        va = align_up(va + len(import_data), SECT_ALIGN)
    if exports:
        export_va = va
        export_data = _build_exports(exports, export_va)
        sections.append(SectionSpec(b".edata", export_data, CNT_INITIALIZED_DATA | MEM_READ))
        vas.append(export_va)
        va = align_up(va + len(export_data), SECT_ALIGN)

    sizeof_image = va
    n = len(sections)
    opt_size = 240 if plus else 224
    pe_off = 0x40 + len(dos_stub)
    headers_size = align_up(pe_off + 4 + 20 + opt_size + 40 * n, FILE_ALIGN)

    # Raw file offsets.
    raw_offsets = []
    raw = headers_size
    for s in sections:
        raw_offsets.append(raw)
        raw = align_up(raw + len(s.data), FILE_ALIGN) if s.data else raw

    if entry_rva is None:
        entry_rva = vas[0] if sections else 0
    sizeof_code = sum(len(s.data) for s in sections if s.characteristics & CNT_CODE)

    buf = bytearray(raw if sections else headers_size)

    # DOS header: "MZ", then e_lfanew at 0x3c.
    buf[0:2] = b"MZ"
    struct.pack_into("<I", buf, 0x3C, pe_off)
    buf[0x40 : 0x40 + len(dos_stub)] = dos_stub

    # PE signature and COFF header.
    buf[pe_off : pe_off + 4] = b"PE\x00\x00"
    struct.pack_into(
        "<HHIIIHH",
        buf,
        pe_off + 4,
        machine,
        n,
        timestamp,
        0,
        num_symbols,
        opt_size,
        coff_characteristics,
    )

    # Optional header.
    opt = pe_off + 24
    struct.pack_into("<H", buf, opt, 0x20B if plus else 0x10B)
    buf[opt + 2] = linker[0]
    buf[opt + 3] = linker[1]
    struct.pack_into("<III", buf, opt + 4, sizeof_code, 0, 0)
    struct.pack_into("<II", buf, opt + 16, entry_rva, vas[0] if vas else 0)
    if plus:
        struct.pack_into("<Q", buf, opt + 24, 0x140000000)
    else:
        struct.pack_into("<II", buf, opt + 24, 0, 0x400000)
    struct.pack_into("<II", buf, opt + 32, SECT_ALIGN, FILE_ALIGN)
    struct.pack_into("<HHHHHH", buf, opt + 40, *os_version, *image_version, *subsystem_version)
    struct.pack_into("<III", buf, opt + 52, 0, sizeof_image, headers_size)
    struct.pack_into("<IHH", buf, opt + 64, 0, subsystem, dll_characteristics)
    if plus:
        struct.pack_into("<QQQQ", buf, opt + 72, 0x100000, 0x1000, 0x100000, heap_commit)
        struct.pack_into("<II", buf, opt + 104, 0, 16)
        dirs_off = opt + 112
    else:
        struct.pack_into("<IIII", buf, opt + 72, 0x100000, 0x1000, 0x100000, heap_commit)
        struct.pack_into("<II", buf, opt + 88, 0, 16)
        dirs_off = opt + 96

    dirs = [(0, 0)] * 16
    if imports:
        dirs[1] = (import_va, import_dir_size)
    if exports:
        dirs[0] = (export_va, len(export_data))
    for index, size in (extra_dirs or {}).items():
        dirs[index] = (vas[0] if vas else SECT_ALIGN, size)
    for i, (dva, dsize) in enumerate(dirs):
        struct.pack_into("<II", buf, dirs_off + 8 * i, dva, dsize)

    # Section table and section payloads.
    table = opt + opt_size
    for i, s in enumerate(sections):
        entry = table + 40 * i
        buf[entry : entry + 8] = s.name.ljust(8, b"\x00")[:8]
        struct.pack_into(
            "<IIIIIIHHI",
            buf,
            entry + 8,
            s.virtual_size,
            vas[i],
            len(s.data),
            raw_offsets[i] if s.data else 0,
            0,
            0,
            0,
            0,
            s.characteristics,
        )
        buf[raw_offsets[i] : raw_offsets[i] + len(s.data)] = s.data

    info = {
        "machine": machine,
        "timestamp": timestamp,
        "coff_characteristics": coff_characteristics,
        "num_symbols": num_symbols,
        "num_sections": n,
        "subsystem": subsystem,
        "dll_characteristics": dll_characteristics,
        "linker": linker,
        "image_version": image_version,
        "os_version": os_version,
        "subsystem_version": subsystem_version,
        "sizeof_code": sizeof_code,
        "sizeof_headers": headers_size,
        "sizeof_image": sizeof_image,
        "heap_commit": heap_commit,
        "entry_rva": entry_rva,
        "sections": [
            {
                "name": s.name,
                "data": s.data,
                "vsize": s.virtual_size,
                "va": vas[i],
                "raw_offset": raw_offsets[i] if s.data else 0,
                "characteristics": s.characteristics,
            }
            for i, s in enumerate(sections)
        ],
        "dirs": dirs,
    }
    return bytes(buf), info


def minimal_pe32() -> tuple[bytes, dict]:
    """One .text section, one import (kernel32.dll!ExitProcess)."""
    text = SectionSpec(
        b".text",
        b"\x55\x8b\xec\x83\xec\x40" * 16,
        CNT_CODE | MEM_EXECUTE | MEM_READ,
    )
    return build_pe([text], imports={"KERNEL32.dll": ["ExitProcess"]})


# --- synthetic corpus -------------------------------------------------------

_BENIGN_IMPORTS = {
    "KERNEL32.dll": [
        "ExitProcess",
        "GetTickCount",
        "CreateFileA",
        "ReadFile",
        "WriteFile",
        "CloseHandle",
        "GetLastError",
        "HeapAlloc",
    ],
    "USER32.dll": ["MessageBoxA", "LoadIconA", "GetDC", "ReleaseDC"],
    "GDI32.dll": ["TextOutA", "SelectObject"],
}

_MALICIOUS_IMPORTS = {
    "KERNEL32.dll": [
        "VirtualAlloc",
        "VirtualProtect",
        "WriteProcessMemory",
        "CreateRemoteThread",
        "LoadLibraryA",
        "GetProcAddress",
        "IsDebuggerPresent",
    ],
    "ADVAPI32.dll": ["RegSetValueExA", "RegCreateKeyExA", "AdjustTokenPrivileges"],
    "WININET.dll": ["InternetOpenA", "InternetOpenUrlA", "InternetReadFile"],
}

_BENIGN_STRINGS = (
    b"Copyright (c) 2016 Example Software Corporation\x00"
    b"C:\\Program Files\\Example\\example.exe\x00"
    b"This program requires Windows Vista or later.\x00"
    b"OK\x00Cancel\x00Apply\x00Settings saved successfully.\x00"
)

_MALICIOUS_STRINGS = (
    b"http://malware-c2.example/gate.php\x00"
    b"https://update-check.example/beacon\x00"
    b"HKEY_LOCAL_MACHINE\\Software\\Microsoft\\Windows\\CurrentVersion\\Run\x00"
    b"cmd.exe /c del /f /q\x00MZP\x00"
)


def _benign_code(rng: np.random.Generator, size: int) -> bytes:
    # Repetitive prologue-like patterns keep entropy low, as compiled code is.
    patterns = [b"\x55\x8b\xec\x83\xec", b"\x8b\x45\x08\x50\xe8", b"\x33\xc0\x5d\xc3\x90"]
    out = bytearray()
    while len(out) < size:
        out += patterns[int(rng.integers(len(patterns)))] * int(rng.integers(4, 12))
    return bytes(out[:size])


def synth_sample(rng: np.random.Generator, malicious: bool) -> bytes:
    """One synthetic PE; the two classes differ in imports and entropy."""
    if malicious:
        packed = rng.integers(0, 256, size=int(rng.integers(2048, 6144)), dtype=np.uint8)
        text = SectionSpec(
            b"UPX1",
            packed.tobytes() + _MALICIOUS_STRINGS,
            CNT_CODE | MEM_EXECUTE | MEM_READ | MEM_WRITE,
        )
        stub = SectionSpec(b"UPX0", b"", CNT_CODE | MEM_EXECUTE | MEM_READ | MEM_WRITE,
                           vsize=int(rng.integers(0x4000, 0x10000)))
        selected = {
            lib: [f for f in fns if rng.random() < 0.8] or fns[:1]
            for lib, fns in _MALICIOUS_IMPORTS.items()
        }
        data, _ = build_pe(
            [stub, text],
            imports=selected,
            timestamp=int(rng.integers(1_300_000_000, 1_500_000_000)),
            subsystem=2,
            dll_characteristics=0,
            extra_dirs={9: 24},  # TLS
            entry_rva=None,
        )
    else:
        code = _benign_code(rng, int(rng.integers(2048, 6144)))
        text = SectionSpec(b".text", code, CNT_CODE | MEM_EXECUTE | MEM_READ)
        rdata = SectionSpec(
            b".rdata",
            _BENIGN_STRINGS + bytes(rng.integers(0x20, 0x7F, size=64, dtype=np.uint8)),
            CNT_INITIALIZED_DATA | MEM_READ,
        )
        selected = {
            lib: [f for f in fns if rng.random() < 0.8] or fns[:1]
            for lib, fns in _BENIGN_IMPORTS.items()
        }
        data, _ = build_pe(
            [text, rdata],
            imports=selected,
            timestamp=int(rng.integers(1_300_000_000, 1_500_000_000)),
            subsystem=int(rng.choice([2, 3])),
            dll_characteristics=0x8140,
            extra_dirs={5: 32},  # relocations
        )
    return data


def synth_corpus(seed: int, n_benign: int, n_malicious: int) -> list[tuple[bytes, int]]:
    """Deterministic corpus of (file bytes, label) pairs."""
    rng = np.random.default_rng(seed)
    out = [(synth_sample(rng, False), 0) for _ in range(n_benign)]
    out += [(synth_sample(rng, True), 1) for _ in range(n_malicious)]
    return out
