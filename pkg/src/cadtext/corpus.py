"""Cleaning, deduplication, normalization and splitting of extracted text.

The pipeline runs: drop empty names -> drop default names -> strip copy
affixes from document names -> normalize -> deduplicate -> split. Records
in a built corpus therefore always hold normalized strings.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

DEFAULT_FEATURE_KEYWORDS = (
    "Extrude", "Revolve", "Fillet", "Chamfer", "Sketch", "Shell", "Sweep",
    "Loft", "Mirror", "Pattern", "Draft", "Hole", "Plane", "Boolean",
    "Split", "Helix", "Thicken", "Rib",
)

DEFAULT_PART_PATTERNS = (r"^Part \d+$",)
DEFAULT_FEATURE_PATTERNS = tuple(
    rf"^{kw} \d+$" for kw in DEFAULT_FEATURE_KEYWORDS
)

SPLIT_NAMES = ("train", "validation", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)

FINETUNE_TEMPLATE = (
    "An assembly with name {name} contains the following parts: {parts}."
)


@dataclass
class CleaningConfig:
    """Default-name patterns and dedup-key behaviour, all overridable."""

    part_patterns: tuple[str, ...] = DEFAULT_PART_PATTERNS
    feature_patterns: tuple[str, ...] = DEFAULT_FEATURE_PATTERNS
    dedup_include_doc_name: bool = True


@dataclass
class DocumentRecord:
    """One CAD document: its name plus part and feature name multisets."""

    doc_id: str
    doc_name: str = ""
    parts: dict[str, int] = field(default_factory=dict)
    features: dict[str, int] = field(default_factory=dict)

    def sorted_strings(self, include_doc_name: bool = True) -> tuple[str, ...]:
        """Sorted multiset of all strings in the record (the dedup key)."""
        items: list[str] = []
        for name, count in self.parts.items():
            items.extend([name] * count)
        for name, count in self.features.items():
            items.extend([name] * count)
        if include_doc_name and self.doc_name:
            items.append(self.doc_name)
        return tuple(sorted(items))


@dataclass
class Corpus:
    """Deduplicated records plus a deterministic train/validation/test split."""

    records: list[DocumentRecord]
    split: dict[str, str]
    seed: int

    def docs_in_split(self, split: str) -> list[DocumentRecord]:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}, expected one of {SPLIT_NAMES}")
        return [r for r in self.records if self.split[r.doc_id] == split]

    def by_id(self) -> dict[str, DocumentRecord]:
        return {r.doc_id: r for r in self.records}


def is_default_name(name: str, kind: str, config: CleaningConfig | None = None) -> bool:
    """True iff ``name`` matches one of the auto-generated default patterns.

    Empty names are not "default"; they are dropped by a separate step.
    """
    config = config or CleaningConfig()
    if kind == "part":
        patterns = config.part_patterns
    elif kind == "feature":
        patterns = config.feature_patterns
    else:
        raise ValueError(f"kind must be 'part' or 'feature', got {kind!r}")
    return any(re.match(p, name) for p in patterns)


def strip_copy_affixes(doc_name: str) -> str:
    """Strip auto-added clone affixes until a fixed point is reached."""
    name = doc_name.strip()
    while True:
        before = name
        if name.startswith("Copy of "):
            name = name[len("Copy of "):].strip()
        if name.endswith(" - Copy"):
            name = name[: -len(" - Copy")].strip()
        if name == before:
            return name


_WS_RUN = re.compile(r"\s+")


def normalize_string(s: str) -> str:
    """Lowercase, underscores to spaces, whitespace runs collapsed, trimmed."""
    return _WS_RUN.sub(" ", s.lower().replace("_", " ")).strip()


def _normalize_counts(counts: dict[str, int]) -> dict[str, int]:
    out: dict[str, int] = {}
    for name, count in counts.items():
        norm = normalize_string(name)
        if not norm:
            continue
        if count > out.get(norm, 0):
            out[norm] = count
    return out


def clean_record(record: DocumentRecord, config: CleaningConfig | None = None) -> DocumentRecord:
    """Apply default-name removal, affix stripping and normalization."""
    config = config or CleaningConfig()
    parts = {
        name: count
        for name, count in record.parts.items()
        if name.strip() and not is_default_name(name, "part", config)
    }
    features = {
        name: count
        for name, count in record.features.items()
        if name.strip() and not is_default_name(name, "feature", config)
    }
    doc_name = normalize_string(strip_copy_affixes(record.doc_name))
    return DocumentRecord(
        doc_id=record.doc_id,
        doc_name=doc_name,
        parts=_normalize_counts(parts),
        features=_normalize_counts(features),
    )


def deduplicate(
    records: list[DocumentRecord], config: CleaningConfig | None = None
) -> list[DocumentRecord]:
    """Keep one representative (lowest doc_id) per identical sorted string list."""
    config = config or CleaningConfig()
    best: dict[tuple[str, ...], DocumentRecord] = {}
    for record in sorted(records, key=lambda r: r.doc_id):
        key = record.sorted_strings(include_doc_name=config.dedup_include_doc_name)
        if key not in best:
            best[key] = record
    return sorted(best.values(), key=lambda r: r.doc_id)


def split_corpus(records: list[DocumentRecord], seed: int) -> Corpus:
    """Assign deduplicated documents to 70/15/15 splits.

    The assignment is a pure function of (sorted doc_ids, seed); the
    shuffle uses NumPy's PCG64 generator so it is reproducible anywhere.
    """
    n = len(records)
    if n < 10:
        raise ValueError(f"need at least 10 documents to split, got {n}")
    doc_ids = sorted(r.doc_id for r in records)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(np.floor(SPLIT_FRACTIONS[0] * n))
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n))
    split: dict[str, str] = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            split[doc_ids[idx]] = "train"
        elif rank < n_train + n_val:
            split[doc_ids[idx]] = "validation"
        else:
            split[doc_ids[idx]] = "test"
    return Corpus(records=sorted(records, key=lambda r: r.doc_id), split=split, seed=seed)


def build_corpus(
    records: list[DocumentRecord], seed: int, config: CleaningConfig | None = None
) -> Corpus:
    """Full pipeline: clean every record, deduplicate, split."""
    config = config or CleaningConfig()
    cleaned = [clean_record(r, config) for r in records]
    return split_corpus(deduplicate(cleaned, config), seed)


def emit_finetune_corpus(corpus: Corpus, split: str | None = None) -> list[str]:
    """Template lines for language-model fine-tuning.

    One line per document with at least one non-default part; parts appear
    once each (multiplicity dropped) in sorted order for determinism.
    """
    docs = corpus.records if split is None else corpus.docs_in_split(split)
    lines = []
    for record in docs:
        if not record.parts:
            continue
        parts = ", ".join(sorted(record.parts))
        lines.append(FINETUNE_TEMPLATE.format(name=record.doc_name, parts=parts))
    return lines


# ---------------------------------------------------------------------------
# File formats: corpus.jsonl, splits.tsv, finetune_{split}.txt (UTF-8, LF)

def write_corpus_jsonl(records: list[DocumentRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(asdict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_corpus_jsonl(path: str | Path) -> list[DocumentRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(DocumentRecord(**json.loads(line)))
    return records


def write_splits_tsv(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc_id in sorted(corpus.split):
            fh.write(f"{doc_id}\t{corpus.split[doc_id]}\n")


def read_splits_tsv(path: str | Path) -> dict[str, str]:
    split: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            doc_id, name = line.split("\t")
            split[doc_id] = name
    return split


def write_finetune_corpus(corpus: Corpus, split: str, path: str | Path) -> int:
    lines = emit_finetune_corpus(corpus, split)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
    return len(lines)
