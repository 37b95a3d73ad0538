"""Tolerant parser for Windows PE (portable executable) files.

``parse_pe`` accepts any byte sequence and never raises: structural damage
is reported through ``ParsedPe.parse_status`` while every offset and size
read from the file is clamped to the file bounds. The model it produces is
read-only and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Windows refuses images with more than 96 sections; declared counts above
# this are adversarial and get clamped (parse is flagged Degraded).
MAX_SECTIONS = 96
_MAX_IMPORT_DESCRIPTORS = 4096
_MAX_IMPORT_FUNCTIONS = 65536
_MAX_EXPORT_NAMES = 16384
_MAX_NAME_BYTES = 4096

_COFF_CHARACTERISTICS = [
    (0x0001, "RELOCS_STRIPPED"),
    (0x0002, "EXECUTABLE_IMAGE"),
    (0x0004, "LINE_NUMS_STRIPPED"),
    (0x0008, "LOCAL_SYMS_STRIPPED"),
    (0x0010, "AGGRESSIVE_WS_TRIM"),
    (0x0020, "LARGE_ADDRESS_AWARE"),
    (0x0080, "BYTES_REVERSED_LO"),
    (0x0100, "NEED_32BIT_MACHINE"),
    (0x0200, "DEBUG_STRIPPED"),
    (0x0400, "REMOVABLE_RUN_FROM_SWAP"),
    (0x0800, "NET_RUN_FROM_SWAP"),
    (0x1000, "SYSTEM"),
    (0x2000, "DLL"),
    (0x4000, "UP_SYSTEM_ONLY"),
    (0x8000, "BYTES_REVERSED_HI"),
]

_MACHINES = {
    0x0000: "UNKNOWN",
    0x014C: "I386",
    0x0162: "R3000",
    0x0166: "R4000",
    0x0168: "R10000",
    0x0169: "WCEMIPSV2",
    0x0184: "ALPHA",
    0x01A2: "SH3",
    0x01A3: "SH3DSP",
    0x01A6: "SH4",
    0x01A8: "SH5",
    0x01C0: "ARM",
    0x01C2: "THUMB",
    0x01C4: "ARMNT",
    0x01D3: "AM33",
    0x01F0: "POWERPC",
    0x01F1: "POWERPCFP",
    0x0200: "IA64",
    0x0266: "MIPS16",
    0x0284: "ALPHA64",
    0x0366: "MIPSFPU",
    0x0466: "MIPSFPU16",
    0x0EBC: "EBC",
    0x5032: "RISCV32",
    0x5064: "RISCV64",
    0x5128: "RISCV128",
    0x6232: "LOONGARCH32",
    0x6264: "LOONGARCH64",
    0x8664: "AMD64",
    0x9041: "M32R",
    0xAA64: "ARM64",
}

_SUBSYSTEMS = {
    0: "UNKNOWN",
    1: "NATIVE",
    2: "WINDOWS_GUI",
    3: "WINDOWS_CUI",
    5: "OS2_CUI",
    7: "POSIX_CUI",
    8: "NATIVE_WINDOWS",
    9: "WINDOWS_CE_GUI",
    10: "EFI_APPLICATION",
    11: "EFI_BOOT_SERVICE_DRIVER",
    12: "EFI_RUNTIME_DRIVER",
    13: "EFI_ROM",
    14: "XBOX",
    16: "WINDOWS_BOOT_APPLICATION",
}

_DLL_CHARACTERISTICS = [
    (0x0020, "HIGH_ENTROPY_VA"),
    (0x0040, "DYNAMIC_BASE"),
    (0x0080, "FORCE_INTEGRITY"),
    (0x0100, "NX_COMPAT"),
    (0x0200, "NO_ISOLATION"),
    (0x0400, "NO_SEH"),
    (0x0800, "NO_BIND"),
    (0x1000, "APPCONTAINER"),
    (0x2000, "WDM_DRIVER"),
    (0x4000, "GUARD_CF"),
    (0x8000, "TERMINAL_SERVER_AWARE"),
]

_SECTION_CHARACTERISTICS = [
    (0x00000008, "TYPE_NO_PAD"),
    (0x00000020, "CNT_CODE"),
    (0x00000040, "CNT_INITIALIZED_DATA"),
    (0x00000080, "CNT_UNINITIALIZED_DATA"),
    (0x00000100, "LNK_OTHER"),
    (0x00000200, "LNK_INFO"),
    (0x00000800, "LNK_REMOVE"),
    (0x00001000, "LNK_COMDAT"),
    (0x00008000, "GPREL"),
    (0x00020000, "MEM_PURGEABLE"),
    (0x00040000, "MEM_LOCKED"),
    (0x00080000, "MEM_PRELOAD"),
    (0x01000000, "LNK_NRELOC_OVFL"),
    (0x02000000, "MEM_DISCARDABLE"),
    (0x04000000, "MEM_NOT_CACHED"),
    (0x08000000, "MEM_NOT_PAGED"),
    (0x10000000, "MEM_SHARED"),
    (0x20000000, "MEM_EXECUTE"),
    (0x40000000, "MEM_READ"),
    (0x80000000, "MEM_WRITE"),
]

# 4-bit object-file alignment field inside section characteristics.
_SECTION_ALIGN_MASK = 0x00F00000
_SECTION_ALIGN_NAMES = {
    n: "ALIGN_%dBYTES" % (1 << (n - 1)) for n in range(1, 15)
}

# Data directory indices (optional header).
DIR_EXPORT = 0
DIR_IMPORT = 1
DIR_RESOURCE = 2
DIR_CERTIFICATE = 4
DIR_RELOCATION = 5
DIR_DEBUG = 6
DIR_TLS = 9


@dataclass(frozen=True)
class ParseStatus:
    """Outcome of a parse: ``ok``, ``degraded`` or ``failed`` plus a reason."""

    level: str
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.level == "ok"

    @property
    def failed(self) -> bool:
        return self.level == "failed"


@dataclass(frozen=True)
class CoffHeader:
    timestamp: int = 0
    machine: str = ""
    characteristics: tuple[str, ...] = ()
    num_sections: int = 0
    num_symbols: int = 0


@dataclass(frozen=True)
class OptionalHeader:
    magic: str = ""
    subsystem: str = ""
    dll_characteristics: tuple[str, ...] = ()
    major_image_version: int = 0
    minor_image_version: int = 0
    major_linker_version: int = 0
    minor_linker_version: int = 0
    major_operating_system_version: int = 0
    minor_operating_system_version: int = 0
    major_subsystem_version: int = 0
    minor_subsystem_version: int = 0
    sizeof_code: int = 0
    sizeof_headers: int = 0
    sizeof_heap_commit: int = 0
    entry_point_rva: int = 0
    sizeof_image: int = 0


@dataclass(frozen=True)
class SectionEntry:
    name: str
    size: int
    vsize: int
    entropy: float
    props: tuple[str, ...]
    raw_offset: int
    virtual_address: int


@dataclass(frozen=True)
class ParsedPe:
    coff: CoffHeader = CoffHeader()
    optional: OptionalHeader = OptionalHeader()
    sections: tuple[SectionEntry, ...] = ()
    imports: dict[str, list[str]] = field(default_factory=dict)
    exports: tuple[str, ...] = ()
    has_debug: bool = False
    has_relocations: bool = False
    has_resources: bool = False
    has_signature: bool = False
    has_tls: bool = False
    parse_status: ParseStatus = ParseStatus("ok")


def section_entropy(data: bytes) -> float:
    """Shannon entropy (bits, base 2) of the byte-value distribution.

    Empty input has entropy 0. Summation runs in ascending byte-value
    order so independent implementations can reproduce it bit-for-bit.
    """
    n = len(data)
    if n == 0:
        return 0.0
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    h = 0.0
    for c in counts.tolist():
        if c:
            p = c / n
            h -= p * math.log2(p)
    return h


def _decode_flags(value: int, table: list[tuple[int, str]], width: int) -> tuple[str, ...]:
    names = []
    known = 0
    for bit, name in table:
        known |= bit
        if value & bit:
            names.append(name)
    rest = value & ~known
    bit = 1
    while rest:
        if rest & 1:
            names.append("UNKNOWN_0x%0*x" % (width, bit))
        rest >>= 1
        bit <<= 1
    return tuple(names)


def _decode_section_props(value: int) -> tuple[str, ...]:
    align = (value & _SECTION_ALIGN_MASK) >> 20
    flags = _decode_flags(value & ~_SECTION_ALIGN_MASK, _SECTION_CHARACTERISTICS, 8)
    if align == 0:
        return flags
    return flags + (_SECTION_ALIGN_NAMES.get(align, "UNKNOWN_ALIGN_0xf"),)


def _machine_name(value: int) -> str:
    return _MACHINES.get(value, "UNKNOWN_0x%04x" % value)


def _subsystem_name(value: int) -> str:
    return _SUBSYSTEMS.get(value, "UNKNOWN_0x%04x" % value)


def _decode_name(raw: bytes) -> str:
    return raw.decode("utf-8", errors="backslashreplace")


class _Cursor:
    """Bounds-checked little-endian reads; out-of-range reads return None."""

    def __init__(self, data: bytes):
        self.data = data
        self.size = len(data)

    def read(self, off: int, n: int) -> bytes | None:
        if off < 0 or n < 0 or off + n > self.size:
            return None
        return self.data[off : off + n]

    def u8(self, off: int) -> int | None:
        raw = self.read(off, 1)
        return raw[0] if raw is not None else None

    def u16(self, off: int) -> int | None:
        raw = self.read(off, 2)
        return int.from_bytes(raw, "little") if raw is not None else None

    def u32(self, off: int) -> int | None:
        raw = self.read(off, 4)
        return int.from_bytes(raw, "little") if raw is not None else None

    def u64(self, off: int) -> int | None:
        raw = self.read(off, 8)
        return int.from_bytes(raw, "little") if raw is not None else None

    def cstring(self, off: int, limit: int = _MAX_NAME_BYTES) -> bytes | None:
        """NUL-terminated bytes at ``off``; truncated at ``limit`` or EOF."""
        if off < 0 or off >= self.size:
            return None
        end = self.data.find(b"\x00", off, min(off + limit, self.size))
        if end < 0:
            end = min(off + limit, self.size)
        return self.data[off:end]


class _SectionMap:
    """RVA-to-file-offset translation over the parsed section table."""

    def __init__(self, sections: tuple[SectionEntry, ...], file_size: int):
        self.sections = sections
        self.file_size = file_size
        self.lowest_va = min((s.virtual_address for s in sections), default=0)

    def to_offset(self, rva: int) -> int | None:
        for s in self.sections:
            span = s.vsize if s.vsize > 0 else s.size
            if s.virtual_address <= rva < s.virtual_address + span:
                off = s.raw_offset + (rva - s.virtual_address)
                return off if 0 <= off < self.file_size else None
        # The header region is mapped 1:1 before the first section.
        if rva < self.lowest_va and rva < self.file_size:
            return rva
        return None


def _parse_sections(
    cur: _Cursor, table_off: int, declared: int, degrade
) -> tuple[SectionEntry, ...]:
    count = declared
    if count > MAX_SECTIONS:
        degrade("section count clamped to %d" % MAX_SECTIONS)
        count = MAX_SECTIONS
    available = max(0, (cur.size - table_off) // 40) if table_off <= cur.size else 0
    if available < count:
        degrade("section table truncated")
        count = available

    entries = []
    for i in range(count):
        off = table_off + 40 * i
        raw_name = cur.read(off, 8) or b""
        vsize = cur.u32(off + 8) or 0
        va = cur.u32(off + 12) or 0
        raw_size = cur.u32(off + 16) or 0
        raw_ptr = cur.u32(off + 20) or 0
        chars = cur.u32(off + 36) or 0

        ptr = min(raw_ptr, cur.size)
        size = min(raw_size, cur.size - ptr)
        entries.append(
            SectionEntry(
                name=_decode_name(raw_name.rstrip(b"\x00")),
                size=size,
                vsize=vsize,
                entropy=section_entropy(cur.data[ptr : ptr + size]),
                props=_decode_section_props(chars),
                raw_offset=ptr,
                virtual_address=va,
            )
        )
    return tuple(entries)


def _parse_imports(
    cur: _Cursor, smap: _SectionMap, dir_rva: int, is_pe32_plus: bool, degrade
) -> dict[str, list[str]]:
    imports: dict[str, list[str]] = {}
    base = smap.to_offset(dir_rva)
    if base is None:
        degrade("import directory unresolvable")
        return imports

    entry_size = 8 if is_pe32_plus else 4
    ordinal_flag = 1 << 63 if is_pe32_plus else 1 << 31
    total_functions = 0

    for i in range(_MAX_IMPORT_DESCRIPTORS):
        off = base + 20 * i
        fields = [cur.u32(off + 4 * j) for j in range(5)]
        if any(f is None for f in fields):
            degrade("import table truncated")
            break
        ilt_rva, _, _, name_rva, iat_rva = fields
        if not any(fields):
            break

        name_off = smap.to_offset(name_rva) if name_rva else None
        raw_name = cur.cstring(name_off) if name_off is not None else None
        if not raw_name:
            degrade("import descriptor with unresolvable name")
            continue
        library = _decode_name(raw_name)
        functions = imports.setdefault(library, [])

        thunk_rva = ilt_rva or iat_rva
        thunk_off = smap.to_offset(thunk_rva) if thunk_rva else None
        if thunk_off is None:
            continue
        while total_functions < _MAX_IMPORT_FUNCTIONS:
            entry = cur.u64(thunk_off) if is_pe32_plus else cur.u32(thunk_off)
            if not entry:
                break
            if entry & ordinal_flag:
                functions.append("ordinal%d" % (entry & 0xFFFF))
            else:
                hint_off = smap.to_offset(entry & 0x7FFFFFFF)
                raw = cur.cstring(hint_off + 2) if hint_off is not None else None
                if raw:
                    functions.append(_decode_name(raw))
                else:
                    degrade("import name unresolvable")
            thunk_off += entry_size
            total_functions += 1
        else:
            degrade("import function count clamped")
            break
    else:
        degrade("import descriptor count clamped")
    return imports


def _parse_exports(cur: _Cursor, smap: _SectionMap, dir_rva: int, degrade) -> tuple[str, ...]:
    base = smap.to_offset(dir_rva)
    if base is None:
        degrade("export directory unresolvable")
        return ()
    num_names = cur.u32(base + 24)
    names_rva = cur.u32(base + 32)
    if num_names is None or names_rva is None:
        degrade("export directory truncated")
        return ()
    if num_names > _MAX_EXPORT_NAMES:
        degrade("export name count clamped")
        num_names = _MAX_EXPORT_NAMES
    names_off = smap.to_offset(names_rva) if num_names else None
    if num_names and names_off is None:
        degrade("export name table unresolvable")
        return ()

    names = []
    for i in range(num_names):
        rva = cur.u32(names_off + 4 * i)
        if rva is None:
            degrade("export name table truncated")
            break
        off = smap.to_offset(rva)
        raw = cur.cstring(off) if off is not None else None
        if raw:
            names.append(_decode_name(raw))
        else:
            degrade("export name unresolvable")
    return tuple(names)


def parse_pe(data: bytes) -> ParsedPe:
    """Parse ``data`` as a PE image; total over arbitrary input.

    A missing MZ or PE signature yields ``parse_status.failed`` with all
    fields at their defaults; recoverable structural damage downgrades the
    status to ``degraded`` but keeps whatever parsed cleanly.
    """
    cur = _Cursor(data)
    if cur.size < 2 or data[0:2] != b"MZ":
        return ParsedPe(parse_status=ParseStatus("failed", "no MZ signature"))
    pe_off = cur.u32(0x3C)
    if pe_off is None or cur.read(pe_off, 4) != b"PE\x00\x00":
        return ParsedPe(parse_status=ParseStatus("failed", "no PE signature"))

    reasons: list[str] = []

    def degrade(reason: str) -> None:
        if reason not in reasons:
            reasons.append(reason)

    coff_off = pe_off + 4
    machine = cur.u16(coff_off)
    declared_sections = cur.u16(coff_off + 2) or 0
    timestamp = cur.u32(coff_off + 4) or 0
    num_symbols = cur.u32(coff_off + 12) or 0
    opt_size = cur.u16(coff_off + 16) or 0
    characteristics = cur.u16(coff_off + 18)
    if machine is None or characteristics is None:
        degrade("truncated COFF header")

    opt_off = coff_off + 20
    optional = OptionalHeader()
    dirs: list[tuple[int, int]] = [(0, 0)] * 16
    is_pe32_plus = False
    magic_known = False

    magic = cur.u16(opt_off) if opt_size else None
    if opt_size == 0:
        degrade("missing optional header")
    elif magic is None:
        degrade("truncated optional header")
    elif magic not in (0x10B, 0x20B):
        degrade("unrecognized optional header magic 0x%04x" % magic)
    else:
        magic_known = True
        is_pe32_plus = magic == 0x20B

        def u16(rel: int) -> int:
            v = cur.u16(opt_off + rel)
            if v is None:
                degrade("truncated optional header")
                return 0
            return v

        def u32(rel: int) -> int:
            v = cur.u32(opt_off + rel)
            if v is None:
                degrade("truncated optional header")
                return 0
            return v

        def u64(rel: int) -> int:
            v = cur.u64(opt_off + rel)
            if v is None:
                degrade("truncated optional header")
                return 0
            return v

        optional = OptionalHeader(
            magic="PE32+" if is_pe32_plus else "PE32",
            subsystem=_subsystem_name(u16(68)),
            dll_characteristics=_decode_flags(u16(70), _DLL_CHARACTERISTICS, 4),
            major_image_version=u16(44),
            minor_image_version=u16(46),
            major_linker_version=cur.u8(opt_off + 2) or 0,
            minor_linker_version=cur.u8(opt_off + 3) or 0,
            major_operating_system_version=u16(40),
            minor_operating_system_version=u16(42),
            major_subsystem_version=u16(48),
            minor_subsystem_version=u16(50),
            sizeof_code=u32(4),
            sizeof_headers=u32(60),
            sizeof_heap_commit=u64(96) if is_pe32_plus else u32(84),
            entry_point_rva=u32(16),
            sizeof_image=u32(56),
        )

        ndirs = u32(108 if is_pe32_plus else 92)
        if ndirs > 16:
            degrade("data directory count clamped")
            ndirs = 16
        dirs_off = opt_off + (112 if is_pe32_plus else 96)
        for i in range(ndirs):
            va = cur.u32(dirs_off + 8 * i)
            size = cur.u32(dirs_off + 8 * i + 4)
            if va is None or size is None:
                degrade("data directories truncated")
                break
            dirs[i] = (va, size)

    sections = _parse_sections(cur, opt_off + opt_size, declared_sections, degrade)

    smap = _SectionMap(sections, cur.size)
    imports: dict[str, list[str]] = {}
    exports: tuple[str, ...] = ()
    if magic_known:
        if dirs[DIR_IMPORT][0]:
            imports = _parse_imports(cur, smap, dirs[DIR_IMPORT][0], is_pe32_plus, degrade)
        if dirs[DIR_EXPORT][0]:
            exports = _parse_exports(cur, smap, dirs[DIR_EXPORT][0], degrade)

    def present(index: int) -> bool:
        va, size = dirs[index]
        return va != 0 and size != 0

    status = ParseStatus("degraded", "; ".join(reasons)) if reasons else ParseStatus("ok")
    return ParsedPe(
        coff=CoffHeader(
            timestamp=timestamp,
            machine=_machine_name(machine) if machine is not None else "",
            characteristics=(
                _decode_flags(characteristics, _COFF_CHARACTERISTICS, 4)
                if characteristics is not None
                else ()
            ),
            num_sections=min(declared_sections, len(sections)),
            num_symbols=num_symbols,
        ),
        optional=optional,
        sections=sections,
        imports=imports,
        exports=exports,
        has_debug=present(DIR_DEBUG),
        has_relocations=present(DIR_RELOCATION),
        has_resources=present(DIR_RESOURCE),
        has_signature=present(DIR_CERTIFICATE),
        has_tls=present(DIR_TLS),
        parse_status=status,
    )


def entry_section(parsed: ParsedPe) -> str:
    """Name of the section whose virtual range contains the entry point.

    Empty string when the parse failed or no section contains the RVA.
    """
    if parsed.parse_status.failed:
        return ""
    rva = parsed.optional.entry_point_rva
    for s in parsed.sections:
        span = s.vsize if s.vsize > 0 else s.size
        if s.virtual_address <= rva < s.virtual_address + span:
            return s.name
    return ""
