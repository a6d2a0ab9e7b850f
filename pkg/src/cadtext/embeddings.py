"""Embedding tables and the shared string-to-vector contract.

An EmbeddingTable maps strings to fixed-dimension vectors. Provenance
decides how a query string is composed:

* ``external``          whole-string lookup (pooling was done upstream)
* ``subword-skipgram``  per token: word vector + hashed n-gram bucket
                        vectors, then mean over tokens
* ``bow-freq``          sum of one-hot token vectors (raw token counts)
* ``tfidf``             tf times ln(N/df) via stored idf-scaled one-hots,
                        then L2 normalization

Interchange format (UTF-8 text): line 1 ``#dim <N>``, optional ``#``
metadata lines, then ``<string> TAB <f_1> SP ... SP <f_N>`` rows with
floats in shortest round-trip decimal. Tab, newline and backslash in
strings are escaped as ``\\t``, ``\\n``, ``\\\\``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROVENANCES = ("bow-freq", "tfidf", "subword-skipgram", "external")

# Bucket rows in subword tables. Tokens are wordpunct tokens (pure
# alphanumeric or pure punctuation runs), so a key mixing both never
# collides with a real token.
BUCKET_KEY_PREFIX = "ng#"

_TOKEN_RE = re.compile(r"[^\W_]+|(?:[^\w\s]|_)+")


class TableFormatError(ValueError):
    """Malformed embedding table file."""

    def __init__(self, path: str, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno
        self.reason = reason


def tokenize_wordpunct(s: str) -> list[str]:
    """Split into maximal alphanumeric runs and maximal runs of
    non-alphanumeric, non-space characters."""
    return _TOKEN_RE.findall(s)


@dataclass
class SubwordInfo:
    ngram_min: int
    ngram_max: int
    bucket_count: int


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: str = "external"
    subword: SubwordInfo | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def validate(self) -> None:
        for key, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"entry {key!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"entry {key!r} contains non-finite components")


def ngram_hashes(token: str, ngram_min: int, ngram_max: int, bucket_count: int) -> list[int]:
    """Hashed character n-gram bucket indices for ``<token>`` (with
    boundary markers), FNV-1a over UTF-8 bytes."""
    wrapped = f"<{token}>"
    out: list[int] = []
    for n in range(ngram_min, ngram_max + 1):
        if n > len(wrapped):
            break
        for i in range(len(wrapped) - n + 1):
            h = 2166136261
            for b in wrapped[i : i + n].encode("utf-8"):
                h = ((h ^ b) * 16777619) & 0xFFFFFFFF
            out.append(h % bucket_count)
    return out


def _compose_token(token: str, table: EmbeddingTable) -> np.ndarray | None:
    """Vector for one token, or None when nothing is known about it."""
    if table.subword is not None:
        vec = np.zeros(table.dim, dtype=np.float64)
        known = False
        word = table.entries.get(token)
        if word is not None:
            vec += word
            known = True
        sw = table.subword
        for idx in ngram_hashes(token, sw.ngram_min, sw.ngram_max, sw.bucket_count):
            bucket = table.entries.get(f"{BUCKET_KEY_PREFIX}{idx}")
            if bucket is not None:
                vec += bucket
                known = True
        return vec if known else None
    return table.entries.get(token)


def embed_string(s: str, table: EmbeddingTable) -> np.ndarray:
    vec, _ = embed_string_flagged(s, table)
    return vec


def embed_string_flagged(s: str, table: EmbeddingTable) -> tuple[np.ndarray, bool]:
    """String vector plus an out-of-vocabulary flag.

    External tables look the whole string up directly. Token tables mean
    their tokens' vectors, except BOW modes which sum one-hot counts (and
    tfidf L2-normalizes the result). Unknown tokens contribute nothing; a
    string with no known component is flagged OOV and embeds to zero.
    """
    zero = np.zeros(table.dim, dtype=np.float64)
    if table.provenance == "external":
        vec = table.entries.get(s)
        if vec is None:
            return zero, True
        return np.asarray(vec, dtype=np.float64), False

    tokens = tokenize_wordpunct(s)
    total = np.zeros(table.dim, dtype=np.float64)
    known = 0
    for token in tokens:
        vec = _compose_token(token, table)
        if vec is None:
            continue
        total += np.asarray(vec, dtype=np.float64)
        known += 1
    if known == 0:
        return zero, True

    if table.provenance == "bow-freq":
        return total, False
    if table.provenance == "tfidf":
        norm = np.linalg.norm(total)
        return (total / norm if norm > 0 else total), False
    return total / known, False


def embed_many(strings: list[str], table: EmbeddingTable) -> tuple[np.ndarray, np.ndarray]:
    """Matrix of string vectors (rows) plus a boolean OOV mask."""
    vectors = np.zeros((len(strings), table.dim), dtype=np.float64)
    oov = np.zeros(len(strings), dtype=bool)
    for i, s in enumerate(strings):
        vectors[i], oov[i] = embed_string_flagged(s, table)
    return vectors, oov


def bow_vectorize(corpus_lines: list[str], mode: str) -> EmbeddingTable:
    """Bag-of-words table over the train-split corpus.

    ``frequency`` stores one-hot token vectors (string vectors are raw
    counts via sum pooling); ``tfidf`` scales each one-hot by
    ln(N/df), so a term present in every line weighs exactly zero.
    """
    if mode not in ("frequency", "tfidf"):
        raise ValueError(f"mode must be 'frequency' or 'tfidf', got {mode!r}")
    if not corpus_lines:
        raise ValueError("empty corpus")
    df: dict[str, int] = {}
    for line in corpus_lines:
        for token in set(tokenize_wordpunct(line)):
            df[token] = df.get(token, 0) + 1
    vocab = sorted(df)
    if not vocab:
        raise ValueError("corpus contains no tokens")
    n_lines = len(corpus_lines)
    dim = len(vocab)
    entries: dict[str, np.ndarray] = {}
    for i, token in enumerate(vocab):
        vec = np.zeros(dim, dtype=np.float32)
        vec[i] = 1.0 if mode == "frequency" else math.log(n_lines / df[token])
        entries[token] = vec
    provenance = "bow-freq" if mode == "frequency" else "tfidf"
    return EmbeddingTable(dim=dim, entries=entries, provenance=provenance)


# ---------------------------------------------------------------------------
# Interchange format

def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(s: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def _format_float(v: float) -> str:
    return np.format_float_positional(np.float32(v), unique=True, trim="0")


def save_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    table.validate()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim {table.dim}\n")
        fh.write(f"#provenance {table.provenance}\n")
        if table.subword is not None:
            sw = table.subword
            fh.write(f"#subword {sw.ngram_min} {sw.ngram_max} {sw.bucket_count}\n")
        for key in sorted(table.entries):
            values = " ".join(_format_float(v) for v in table.entries[key])
            fh.write(f"{_escape(key)}\t{values}\n")


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    dim: int | None = None
    provenance = "external"
    subword: SubwordInfo | None = None
    entries: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                fields = line[1:].split()
                if lineno == 1:
                    if len(fields) != 2 or fields[0] != "dim":
                        raise TableFormatError(str(path), lineno, "first line must be '#dim <N>'")
                    dim = int(fields[1])
                    if dim <= 0:
                        raise TableFormatError(str(path), lineno, "dim must be positive")
                elif fields and fields[0] == "provenance":
                    if len(fields) != 2 or fields[1] not in PROVENANCES:
                        raise TableFormatError(str(path), lineno, "bad provenance header")
                    provenance = fields[1]
                elif fields and fields[0] == "subword":
                    if len(fields) != 4:
                        raise TableFormatError(
                            str(path), lineno, "expected '#subword <min> <max> <buckets>'"
                        )
                    subword = SubwordInfo(int(fields[1]), int(fields[2]), int(fields[3]))
                continue
            if dim is None:
                raise TableFormatError(str(path), lineno, "missing '#dim <N>' header")
            key_raw, _, values_raw = line.partition("\t")
            if not values_raw:
                raise TableFormatError(str(path), lineno, "expected '<string> TAB <floats>'")
            parts = values_raw.split(" ")
            if len(parts) != dim:
                raise TableFormatError(
                    str(path), lineno, f"expected {dim} components, got {len(parts)}"
                )
            try:
                vec = np.array([float(p) for p in parts], dtype=np.float32)
            except ValueError as exc:
                raise TableFormatError(str(path), lineno, f"bad float: {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise TableFormatError(str(path), lineno, "non-finite component")
            entries[_unescape(key_raw)] = vec
    if dim is None:
        raise TableFormatError(str(path), 1, "empty file, missing '#dim <N>' header")
    return EmbeddingTable(dim=dim, entries=entries, provenance=provenance, subword=subword)
