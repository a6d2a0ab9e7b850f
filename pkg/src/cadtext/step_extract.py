"""Extraction of solid-body name strings from STEP (ISO 10303-21) files.

Only the first (name) string parameter of ``MANIFOLD_SOLID_BREP`` entity
records is of interest; everything else in the exchange structure is
skipped. Parsing is record oriented: the byte stream is split on ``;``
outside quoted strings, so no EXPRESS grammar is needed.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

SOLID_BREP_KEYWORD = "MANIFOLD_SOLID_BREP"

_ENTITY_RE = re.compile(r"^#\s*\d+\s*=\s*([A-Z_0-9]+)\s*\(")


class StepParseError(ValueError):
    """Raised when the input cannot be read as a text STEP exchange file."""

    def __init__(self, file_id: str, reason: str):
        super().__init__(f"{file_id}: {reason}")
        self.file_id = file_id
        self.reason = reason


class StepDecodeError(ValueError):
    """Raised on a truncated or malformed string control directive."""

    def __init__(self, raw: str, offset: int, reason: str):
        super().__init__(f"bad escape at offset {offset}: {reason} (in {raw!r})")
        self.raw = raw
        self.offset = offset
        self.reason = reason


@dataclass(frozen=True)
class StepNameOccurrence:
    """One name string attached to one entity instance.

    ``raw_name`` is the quoted string parameter exactly as it appears in
    the record, before any control-directive decoding.
    """

    entity_kind: str  # "solid-brep" | "other"
    raw_name: str
    file_id: str


@dataclass
class ScanResult:
    """Occurrences found in one file plus a tally of skipped bad records."""

    file_id: str
    occurrences: list[StepNameOccurrence] = field(default_factory=list)
    warnings: int = 0


def _decode_bytes(data: bytes) -> str:
    # Legacy exports are frequently not UTF-8; Latin-1 recovers every byte.
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("latin-1")


def _split_records(text: str):
    """Yield ``;``-terminated records, ignoring ``;`` inside quoted strings."""
    start = 0
    in_string = False
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if in_string:
            if c == "'":
                # '' is an escaped quote and stays inside the string
                if i + 1 < n and text[i + 1] == "'":
                    i += 2
                    continue
                in_string = False
        elif c == "'":
            in_string = True
        elif c == ";":
            yield text[start:i]
            start = i + 1
        i += 1
    tail = text[start:].strip()
    if tail:
        yield tail  # unterminated trailing record, tolerated


def _first_string_param(record: str) -> str | None:
    """Return the raw content of the first quoted parameter, or None."""
    try:
        open_q = record.index("'")
    except ValueError:
        return None
    i = open_q + 1
    n = len(record)
    out_start = i
    while i < n:
        if record[i] == "'":
            if i + 1 < n and record[i + 1] == "'":
                i += 2
                continue
            return record[out_start:i]
        i += 1
    return None  # unterminated string


def scan_step_file(data: bytes, file_id: str = "<bytes>") -> ScanResult:
    """Collect one occurrence per MANIFOLD_SOLID_BREP entity instance.

    Raises StepParseError on non-STEP input. Malformed entity records are
    skipped and counted in ``ScanResult.warnings``.
    """
    text = _decode_bytes(data)
    if "ISO-10303-21" not in text[:4096]:
        raise StepParseError(file_id, "missing ISO-10303-21 header, not a text STEP file")

    result = ScanResult(file_id=file_id)
    for record in _split_records(text):
        record = record.strip()
        m = _ENTITY_RE.match(record)
        if not m:
            continue
        # Exact keyword match at the start of the type token; complex or
        # instanced subtypes are out of scope.
        if m.group(1) != SOLID_BREP_KEYWORD:
            continue
        raw_name = _first_string_param(record)
        if raw_name is None:
            result.warnings += 1
            continue
        result.occurrences.append(
            StepNameOccurrence(entity_kind="solid-brep", raw_name=raw_name, file_id=file_id)
        )
    return result


_HEX_RE = re.compile(r"[0-9A-Fa-f]+")


def decode_step_string(raw: str) -> str:
    """Resolve ISO 10303-21 control directives in a string parameter.

    Handles ``''`` -> ``'``, ``\\\\`` -> ``\\``, ``\\X2\\..\\X0\\`` (UTF-16BE
    code units), ``\\X4\\..\\X0\\`` (UTF-32BE code units) and ``\\X\\hh``
    (Latin-1 byte). A backslash that does not open a known directive is
    kept literally; truncated directives raise StepDecodeError.
    """
    out: list[str] = []
    i = 0
    n = len(raw)
    while i < n:
        c = raw[i]
        if c == "'" and i + 1 < n and raw[i + 1] == "'":
            out.append("'")
            i += 2
        elif c == "\\":
            if raw.startswith("\\\\", i):
                out.append("\\")
                i += 2
            elif raw.startswith("\\X2\\", i) or raw.startswith("\\X4\\", i):
                width = 4 if raw[i + 2] == "2" else 8
                end = raw.find("\\X0\\", i + 4)
                if end < 0:
                    raise StepDecodeError(raw, i, "missing \\X0\\ terminator")
                hexdata = raw[i + 4 : end]
                if not hexdata or len(hexdata) % width != 0 or not _HEX_RE.fullmatch(hexdata):
                    raise StepDecodeError(raw, i, f"expected multiple of {width} hex digits")
                if width == 4:
                    units = bytes.fromhex(hexdata)
                    try:
                        out.append(units.decode("utf-16-be"))
                    except UnicodeDecodeError as exc:
                        raise StepDecodeError(raw, i, f"invalid UTF-16BE data: {exc}") from None
                else:
                    for k in range(0, len(hexdata), 8):
                        cp = int(hexdata[k : k + 8], 16)
                        if cp > 0x10FFFF:
                            raise StepDecodeError(raw, i, f"code point U+{cp:X} out of range")
                        out.append(chr(cp))
                i = end + 4
            elif raw.startswith("\\X\\", i):
                hh = raw[i + 3 : i + 5]
                if len(hh) != 2 or not _HEX_RE.fullmatch(hh):
                    raise StepDecodeError(raw, i, "expected two hex digits after \\X\\")
                out.append(chr(int(hh, 16)))
                i += 5
            else:
                out.append("\\")
                i += 1
        else:
            out.append(c)
            i += 1
    return "".join(out)


def file_name_multiset(scan: ScanResult, warn_tally: list[int] | None = None) -> dict[str, int]:
    """Decoded name -> count within one scanned file.

    Names whose escapes fail to decode fall back to the raw string; the
    fallback is tallied into ``warn_tally[0]`` when given.
    """
    counts: Counter[str] = Counter()
    for occ in scan.occurrences:
        try:
            name = decode_step_string(occ.raw_name)
        except StepDecodeError:
            name = occ.raw_name
            if warn_tally is not None:
                warn_tally[0] += 1
        counts[name] += 1
    return dict(counts)


def aggregate_document(files: list[dict[str, int]]) -> dict[str, int]:
    """Per-string maximum count over all files of one document.

    The max (not the sum) preserves genuine repeats within one body file
    while ignoring copies kept across design-revision tabs.
    """
    agg: dict[str, int] = {}
    for counts in files:
        for name, count in counts.items():
            if count > agg.get(name, 0):
                agg[name] = count
    return agg
