"""Synthetic and planted corpora used across the test suite.

Three generators:

* ``clean_corpus``: realistic multi-word part names for sampling and
  pipeline tests.
* ``planted_topics_corpus``: each document draws globally unique single
  tokens whose first six characters encode a latent topic, so subword
  models can generalize to unseen tokens while whole-word models cannot.
* ``planted_missing_corpus``: documents whose part vectors sum to zero,
  making the removed part exactly predictable from the remaining ones.
"""

from __future__ import annotations

import numpy as np

from cadtext.corpus import Corpus, DocumentRecord, split_corpus
from cadtext.embeddings import EmbeddingTable

ADJECTIVES = [
    "left", "right", "upper", "lower", "front", "back", "big", "little",
    "inner", "outer", "main", "rear", "top", "bottom", "center", "side",
]
NOUNS = [
    "gear", "wheel", "shaft", "bracket", "plate", "frame", "pin", "rod",
    "bearing", "housing", "mount", "arm", "base", "cover", "panel",
    "hinge", "spring", "knob", "lever", "pulley", "axle", "clamp",
    "spacer", "flange", "coupler", "piston", "nozzle", "fitting",
]


def clean_corpus(n_docs: int, seed: int, parts_lo: int = 2, parts_hi: int = 8) -> Corpus:
    """Documents with realistic already-normalized part names."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_docs):
        n_parts = int(rng.integers(parts_lo, parts_hi + 1))
        parts: dict[str, int] = {}
        while len(parts) < n_parts:
            adj = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
            noun = NOUNS[int(rng.integers(len(NOUNS)))]
            name = f"{adj} {noun}"
            if rng.random() < 0.3:
                name = f"{name} {int(rng.integers(1, 10))}"
            parts[name] = int(rng.integers(1, 4))
        doc_name = f"{NOUNS[int(rng.integers(len(NOUNS)))]} assembly {i}"
        records.append(DocumentRecord(doc_id=f"doc{i:06d}", doc_name=doc_name, parts=parts))
    return split_corpus(records, seed)


def unique_parts_corpus(n_docs: int, seed: int) -> Corpus:
    """Like clean_corpus but every part name carries a globally unique
    suffix token, mirroring the mostly-unique names of real CAD data."""
    rng = np.random.default_rng(seed)
    records = []
    uid = 0
    for i in range(n_docs):
        n_parts = int(rng.integers(2, 6))
        parts: dict[str, int] = {}
        while len(parts) < n_parts:
            adj = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
            noun = NOUNS[int(rng.integers(len(NOUNS)))]
            parts[f"{adj} {noun} u{uid:06d}"] = 1
            uid += 1
        records.append(DocumentRecord(
            doc_id=f"doc{i:06d}", doc_name=f"asm {i}", parts=parts))
    return split_corpus(records, seed)


def _base26(value: int, width: int) -> str:
    letters = []
    for _ in range(width):
        letters.append(chr(ord("a") + value % 26))
        value //= 26
    return "".join(reversed(letters))


def planted_topics_corpus(
    n_docs: int, n_topics: int, seed: int, parts_lo: int = 3, parts_hi: int = 5
) -> Corpus:
    """Latent-topic corpus with globally unique part tokens.

    Every part name is one token: a 6-letter topic marker followed by a
    unique 4-letter suffix. Same-document parts share the marker, so the
    topic is recoverable from character n-grams but never from whole-word
    identity across documents.
    """
    rng = np.random.default_rng(seed)
    markers: list[str] = []
    seen = set()
    while len(markers) < n_topics:
        m = "".join(chr(ord("a") + int(c)) for c in rng.integers(0, 26, size=6))
        if m not in seen:
            seen.add(m)
            markers.append(m)
    records = []
    counter = 0
    for i in range(n_docs):
        topic = int(rng.integers(n_topics))
        n_parts = int(rng.integers(parts_lo, parts_hi + 1))
        parts = {}
        for _ in range(n_parts):
            parts[f"{markers[topic]}{_base26(counter, 4)}"] = 1
            counter += 1
        records.append(DocumentRecord(
            doc_id=f"doc{i:06d}", doc_name=f"asm {i}", parts=parts))
    return split_corpus(records, seed)


def planted_missing_corpus(
    n_docs: int, dim: int, seed: int, parts_per_doc: int = 4
) -> tuple[Corpus, EmbeddingTable]:
    """Documents whose part embeddings sum to zero, plus the matching
    external table: the missing part equals minus the sum of the inputs."""
    rng = np.random.default_rng(seed)
    records = []
    entries: dict[str, np.ndarray] = {}
    for i in range(n_docs):
        vectors = rng.standard_normal((parts_per_doc - 1, dim))
        last = -vectors.sum(axis=0, keepdims=True)
        all_vecs = np.concatenate([vectors, last], axis=0)
        parts = {}
        for j in range(parts_per_doc):
            name = f"d{i}p{j}"
            parts[name] = 1
            entries[name] = all_vecs[j].astype(np.float32)
        records.append(DocumentRecord(
            doc_id=f"doc{i:06d}", doc_name=f"doc {i}", parts=parts))
    corpus = split_corpus(records, seed)
    table = EmbeddingTable(dim=dim, entries=entries, provenance="external")
    return corpus, table


def all_test_corpus(corpus: Corpus) -> Corpus:
    """Reassign every document to the test split (for ranking baselines)."""
    return Corpus(
        records=corpus.records,
        split={doc_id: "test" for doc_id in corpus.split},
        seed=corpus.seed,
    )
