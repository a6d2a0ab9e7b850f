"""Identification of unambiguous standard fasteners in part names.

A fastener is identified when a standard's family and code appear in the
name (optional whitespace/hyphens between them) together with a metric
dimension token ``M{d1}x{d2}`` that is valid for that standard. The
shipped standards table covers ISO 4762 / DIN 912 / DIN 913 dimension
grids plus code-only rows for the remaining families.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from cadtext.corpus import Corpus

FAMILIES = ("BS", "KS", "DIN EN", "DIN", "ISO", "AS", "UNI", "IS", "ANSI", "DIN EN ISO")


@dataclass(frozen=True)
class FastenerStandard:
    family: str
    code: str
    valid_dims: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown fastener family {self.family!r}")


@dataclass(frozen=True)
class FastenerMatch:
    part_name: str
    family: str
    code: str
    dims: tuple[int, int]
    dims_verified: bool


def load_standards(path: str | Path | None = None) -> list[FastenerStandard]:
    """Load the standards table (family TAB code TAB d1 TAB d2, one row
    per valid dimension pair; empty d1/d2 marks a code-only entry)."""
    if path is None:
        text = resources.files("cadtext.data").joinpath("fastener_standards.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    dims: dict[tuple[str, str], set[tuple[int, int]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) == 2:  # code-only row: dimension grid unknown
            fields += ["", ""]
        if len(fields) != 4:
            raise ValueError(f"standards table line {lineno}: expected 2 or 4 tab-separated fields")
        family, code, d1, d2 = fields
        key = (family, code)
        dims.setdefault(key, set())
        if d1.strip() or d2.strip():
            dims[key].add((int(d1), int(d2)))
    return [
        FastenerStandard(family=family, code=code, valid_dims=frozenset(pairs))
        for (family, code), pairs in sorted(dims.items())
    ]


_DIM_RE = re.compile(r"\bm(\d+)x(\d+)\b")


def _standard_pattern(std: FastenerStandard) -> re.Pattern[str]:
    words = [re.escape(w) for w in std.family.lower().split()]
    words.append(re.escape(std.code.lower()))
    return re.compile(r"\b" + r"[\s\-]*".join(words) + r"\b")


def detect_fasteners(name: str, db: list[FastenerStandard]) -> list[FastenerMatch]:
    """All unambiguous fastener identifications in a normalized part name.

    Longest-family precedence: a family+code hit whose span overlaps a hit
    with a longer family string is suppressed, so "din en iso 4762" is
    never also reported as ISO 4762.
    """
    if not db:
        raise ValueError("empty fastener standards table")
    dims_found = [(int(m.group(1)), int(m.group(2))) for m in _DIM_RE.finditer(name)]
    if not dims_found:
        return []

    hits: list[tuple[FastenerStandard, tuple[int, int]]] = []
    for std in db:
        for m in _standard_pattern(std).finditer(name):
            hits.append((std, m.span()))

    matches: list[FastenerMatch] = []
    for std, span in hits:
        shadowed = any(
            other is not std
            and len(other.family) > len(std.family)
            and not (ospan[1] <= span[0] or span[1] <= ospan[0])
            for other, ospan in hits
        )
        if shadowed:
            continue
        for dims in dims_found:
            verified = dims in std.valid_dims
            if std.valid_dims and not verified:
                continue
            matches.append(
                FastenerMatch(
                    part_name=name,
                    family=std.family,
                    code=std.code,
                    dims=dims,
                    dims_verified=verified,
                )
            )
    return matches


@dataclass
class FastenerReport:
    documents_with_fastener: int = 0
    total_fasteners: int = 0
    per_standard: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "documents_with_fastener": self.documents_with_fastener,
                "total_fasteners": self.total_fasteners,
                "per_standard": dict(sorted(self.per_standard.items())),
            },
            indent=2,
            sort_keys=True,
        )


def corpus_fastener_report(corpus, db: list[FastenerStandard] | None = None) -> FastenerReport:
    """Count fastener part occurrences (with multiplicity) over a corpus
    (or a plain record list).

    A part name with several hits is tallied once, under its first match.
    """
    db = db if db is not None else load_standards()
    records = corpus.records if isinstance(corpus, Corpus) else corpus
    report = FastenerReport()
    for record in records:
        doc_has_fastener = False
        for part, count in record.parts.items():
            found = detect_fasteners(part, db)
            if not found:
                continue
            doc_has_fastener = True
            report.total_fasteners += count
            key = f"{found[0].family} {found[0].code}"
            report.per_standard[key] = report.per_standard.get(key, 0) + count
        if doc_has_fastener:
            report.documents_with_fastener += 1
    return report
