"""Materialization of the three self-supervised tasks from a corpus.

All sampling is a pure function of (corpus, split, seed); the generators
use a single seeded NumPy PCG64 stream, so artifacts are reproducible and
every embedding source faces identical task instances.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cadtext.corpus import Corpus, DocumentRecord
from cadtext.embeddings import tokenize_wordpunct

logger = logging.getLogger(__name__)

BATCH_SIZE = 512


@dataclass(frozen=True)
class PairSample:
    part_a: str
    part_b: str
    label: str  # "positive" | "negative"
    doc_id_a: str
    doc_id_b: str


@dataclass
class RankingInstance:
    input_strings: list[str]
    target_index: int
    doc_id: str


@dataclass
class RankingBatch:
    instances: list[RankingInstance]
    candidates: list[str]

    def validate(self, batch_size: int = BATCH_SIZE) -> None:
        if len(self.candidates) > batch_size:
            raise ValueError(f"batch has {len(self.candidates)} candidates, max {batch_size}")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("duplicate candidate strings in batch")
        for inst in self.instances:
            if not 0 <= inst.target_index < len(self.candidates):
                raise ValueError(f"target index {inst.target_index} out of range")


def token_set(s: str) -> frozenset[str]:
    return frozenset(tokenize_wordpunct(s))


def build_cooccurrence_index(corpus: Corpus) -> dict[str, set[str]]:
    """Part string -> ids of documents it occurs in, over the full corpus."""
    index: dict[str, set[str]] = {}
    for record in corpus.records:
        for part in record.parts:
            index.setdefault(part, set()).add(record.doc_id)
    return index


def pair_cooccurs(a: str, b: str, index: dict[str, set[str]]) -> bool:
    docs_a = index.get(a)
    docs_b = index.get(b)
    if not docs_a or not docs_b:
        return False
    return not docs_a.isdisjoint(docs_b)


def sample_two_parts(
    corpus: Corpus, split: str, seed: int, token_rule: str = "disjoint"
) -> list[PairSample]:
    """Balanced positive/negative part pairs for the Two Parts task.

    Positives are same-document pairs whose token sets are disjoint (or
    merely non-identical with ``token_rule="distinct"``). Negatives come
    from shuffling the pairwise correspondence; any negative that shares a
    document anywhere in the corpus, or violates the token rule, is
    dropped, and surplus positives are discarded at random to balance.
    """
    if token_rule not in ("disjoint", "distinct"):
        raise ValueError(f"token_rule must be 'disjoint' or 'distinct', got {token_rule!r}")

    def ok(ta: frozenset[str], tb: frozenset[str]) -> bool:
        return ta.isdisjoint(tb) if token_rule == "disjoint" else ta != tb

    rng = np.random.default_rng(seed)
    positives: list[PairSample] = []
    for record in corpus.docs_in_split(split):
        parts = sorted(record.parts)
        if len(parts) < 2:
            continue
        tokens = {p: token_set(p) for p in parts}
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                if ok(tokens[parts[i]], tokens[parts[j]]):
                    positives.append(
                        PairSample(parts[i], parts[j], "positive", record.doc_id, record.doc_id)
                    )
    if not positives:
        raise ValueError(f"split {split!r} yields zero eligible pairs")

    index = build_cooccurrence_index(corpus)
    perm = rng.permutation(len(positives))
    negatives: list[PairSample] = []
    for i, j in enumerate(perm):
        a, b = positives[i], positives[int(j)]
        if pair_cooccurs(a.part_a, b.part_b, index):
            continue
        if not ok(token_set(a.part_a), token_set(b.part_b)):
            continue
        negatives.append(PairSample(a.part_a, b.part_b, "negative", a.doc_id_a, b.doc_id_b))
    if not negatives:
        raise ValueError(
            f"split {split!r}: no negatives survived co-occurrence and token filtering"
        )

    keep = rng.choice(len(positives), size=len(negatives), replace=False)
    balanced = [positives[int(k)] for k in keep] + negatives
    order = rng.permutation(len(balanced))
    return [balanced[int(k)] for k in order]


def subsplit_pairs(
    pairs: list[PairSample], seed: int
) -> dict[str, list[PairSample]]:
    """70/15/15 sub-split of a pair list (for the downstream classifier)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    n = len(pairs)
    n_train = int(np.floor(0.70 * n))
    n_val = int(np.floor(0.15 * n))
    out = {"train": [], "validation": [], "test": []}
    for rank, idx in enumerate(order):
        if rank < n_train:
            out["train"].append(pairs[int(idx)])
        elif rank < n_train + n_val:
            out["validation"].append(pairs[int(idx)])
        else:
            out["test"].append(pairs[int(idx)])
    return out


def _group_by_part_total(
    docs: list[DocumentRecord], batch_size: int
) -> list[list[DocumentRecord]]:
    """Greedy grouping: add documents while the union of their part strings
    stays within batch_size; an overfull document starts the next group."""
    groups: list[list[DocumentRecord]] = []
    current: list[DocumentRecord] = []
    pool: set[str] = set()
    for doc in docs:
        parts = set(doc.parts)
        if len(parts) > batch_size:
            logger.warning("document %s has %d parts, exceeding batch size; skipped",
                           doc.doc_id, len(parts))
            continue
        new = len(parts - pool)
        if current and len(pool) + new > batch_size:
            groups.append(current)
            current, pool = [], set()
        current.append(doc)
        pool |= parts
    if current:
        groups.append(current)
    return groups


def build_missing_part_batches(
    corpus: Corpus, split: str, seed: int, batch_size: int = BATCH_SIZE
) -> list[RankingBatch]:
    """Ranking batches for the Missing Part task.

    One part per document is removed uniformly at random as the target;
    candidates are the (deduplicated, shuffled) part strings of every
    document in the batch, targets included.
    """
    rng = np.random.default_rng(seed)
    docs = [r for r in corpus.docs_in_split(split) if len(r.parts) >= 2]
    if not docs:
        raise ValueError(f"split {split!r} has no documents with two or more parts")
    order = rng.permutation(len(docs))
    shuffled = [docs[int(i)] for i in order]
    total_parts = len({p for d in shuffled for p in d.parts})
    if total_parts < batch_size:
        logger.warning("split %r has %d part strings, below the batch size %d; "
                       "emitting a single smaller batch", split, total_parts, batch_size)

    batches: list[RankingBatch] = []
    for group in _group_by_part_total(shuffled, batch_size):
        candidates = sorted({p for d in group for p in d.parts})
        cand_order = rng.permutation(len(candidates))
        candidates = [candidates[int(i)] for i in cand_order]
        position = {c: i for i, c in enumerate(candidates)}
        instances = []
        for doc in group:
            parts = sorted(doc.parts)
            target = parts[int(rng.integers(len(parts)))]
            inputs = [p for p in parts if p != target]
            instances.append(RankingInstance(inputs, position[target], doc.doc_id))
        batch = RankingBatch(instances=instances, candidates=candidates)
        batch.validate(batch_size)
        batches.append(batch)
    return batches


def build_docname_batches(
    corpus: Corpus, split: str, seed: int, batch_size: int = BATCH_SIZE
) -> list[RankingBatch]:
    """Ranking batches for the Document Name task.

    Every document contributes all its parts as inputs and its own name as
    the target; candidates are the batch's document names.
    """
    rng = np.random.default_rng(seed)
    docs = [
        r for r in corpus.docs_in_split(split)
        if r.doc_name and len(r.parts) >= 1
    ]
    if not docs:
        raise ValueError(f"split {split!r} has no named documents with parts")
    order = rng.permutation(len(docs))
    shuffled = [docs[int(i)] for i in order]
    if len(shuffled) < batch_size:
        logger.warning("split %r has %d eligible documents, below the batch size %d; "
                       "emitting a single smaller batch", split, len(shuffled), batch_size)

    batches: list[RankingBatch] = []
    for start in range(0, len(shuffled), batch_size):
        group = shuffled[start : start + batch_size]
        names = sorted({d.doc_name for d in group})
        name_order = rng.permutation(len(names))
        candidates = [names[int(i)] for i in name_order]
        position = {c: i for i, c in enumerate(candidates)}
        instances = [
            RankingInstance(sorted(doc.parts), position[doc.doc_name], doc.doc_id)
            for doc in group
        ]
        batch = RankingBatch(instances=instances, candidates=candidates)
        batch.validate(batch_size)
        batches.append(batch)
    return batches


# ---------------------------------------------------------------------------
# Artifact files. Seeded filenames embed the seed, e.g. pairs_test_seed7.tsv.

def pairs_filename(split: str, seed: int) -> str:
    return f"pairs_{split}_seed{seed}.tsv"

def batches_filename(task: str, split: str, seed: int) -> str:
    return f"batches_{task}_{split}_seed{seed}.jsonl"


def write_pairs_tsv(pairs: list[PairSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(f"{p.label}\t{p.part_a}\t{p.part_b}\n")


def read_pairs_tsv(path: str | Path) -> list[PairSample]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            label, part_a, part_b = line.split("\t")
            pairs.append(PairSample(part_a, part_b, label, "", ""))
    return pairs


def write_batches_jsonl(batches: list[RankingBatch], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for batch in batches:
            fh.write(json.dumps({
                "candidates": batch.candidates,
                "instances": [
                    {"inputs": i.input_strings, "target_index": i.target_index,
                     "doc_id": i.doc_id}
                    for i in batch.instances
                ],
            }, ensure_ascii=False))
            fh.write("\n")


def read_batches_jsonl(path: str | Path) -> list[RankingBatch]:
    batches = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            batches.append(RankingBatch(
                instances=[
                    RankingInstance(i["inputs"], i["target_index"], i.get("doc_id", ""))
                    for i in obj["instances"]
                ],
                candidates=obj["candidates"],
            ))
    return batches
