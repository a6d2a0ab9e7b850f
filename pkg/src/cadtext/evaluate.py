"""Trial protocol: train the downstream model per trial seed, report
mean and standard deviation of test accuracy over trials.

Embedding tables are frozen throughout; a checksum helper lets tests
assert that no training step mutated one. Trial seeds are base_seed + i,
recorded in the report so any run can be reproduced exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from cadtext.corpus import Corpus
from cadtext.embeddings import EmbeddingTable, embed_many
from cadtext.neural import (
    MLPTrainConfig,
    SetEncoderConfig,
    SetEncoderParams,
    cosine_rank_batch,
    mlp_accuracy,
    mlp_train,
    pad_instances,
    embedding_cache,
    set_encoder_batch_forward,
    set_encoder_train,
)
from cadtext.tasks import (
    RankingBatch,
    build_docname_batches,
    build_missing_part_batches,
    sample_two_parts,
    subsplit_pairs,
)

TASKS = ("two-parts", "missing-part", "doc-name")


def table_checksum(table: EmbeddingTable) -> str:
    """SHA-256 over the table's sorted entries; detects any mutation."""
    digest = hashlib.sha256()
    digest.update(f"dim={table.dim};prov={table.provenance}".encode())
    for key in sorted(table.entries):
        digest.update(key.encode("utf-8"))
        digest.update(np.ascontiguousarray(table.entries[key], dtype=np.float64).tobytes())
    return digest.hexdigest()


def random_table(strings, dim: int, seed: int) -> EmbeddingTable:
    """Gaussian random vectors for every string: the chance-level source."""
    rng = np.random.default_rng(seed)
    entries = {
        s: rng.standard_normal(dim).astype(np.float32)
        for s in sorted(set(strings))
    }
    return EmbeddingTable(dim=dim, entries=entries, provenance="external")


@dataclass
class TrialReport:
    task: str
    accuracies: list[float]
    mean: float
    std: float
    n_trials: int
    seeds: list[int]

    @staticmethod
    def from_accuracies(task: str, accuracies: list[float], seeds: list[int]) -> "TrialReport":
        accs = np.asarray(accuracies, dtype=np.float64)
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        return TrialReport(
            task=task,
            accuracies=[float(a) for a in accs],
            mean=float(np.mean(accs)),
            std=std,
            n_trials=len(accs),
            seeds=list(seeds),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TrialReport":
        return TrialReport(**json.loads(text))


@dataclass
class RankingPrediction:
    doc_id: str
    inputs: list[str]
    target: str
    predicted: str
    correct: bool


def rank_batches(
    params: SetEncoderParams,
    batches: list[RankingBatch],
    table: EmbeddingTable,
    collect_predictions: bool = False,
) -> tuple[float, list[RankingPrediction]]:
    """Accuracy of cosine-ranked predictions over frozen batches."""
    hits = 0
    total = 0
    predictions: list[RankingPrediction] = []
    for batch in batches:
        cand_vecs, _ = embed_many(batch.candidates, table)
        strings = {s for inst in batch.instances for s in inst.input_strings}
        strings.update(batch.candidates[inst.target_index] for inst in batch.instances)
        vec = embedding_cache(strings, table)
        instances = [(inst.input_strings, batch.candidates[inst.target_index])
                     for inst in batch.instances]
        data = pad_instances(instances, vec, table.dim)
        pred = set_encoder_batch_forward(params, data.x, data.mask).data
        chosen = cosine_rank_batch(pred, cand_vecs)
        for inst, choice in zip(batch.instances, chosen):
            correct = int(choice) == inst.target_index
            hits += correct
            total += 1
            if collect_predictions:
                predictions.append(RankingPrediction(
                    doc_id=inst.doc_id,
                    inputs=list(inst.input_strings),
                    target=batch.candidates[inst.target_index],
                    predicted=batch.candidates[int(choice)],
                    correct=bool(correct),
                ))
    return hits / max(1, total), predictions


def _missing_part_sampler(docs):
    """Per-epoch resampling of the removed part for each training document."""
    parts_lists = [sorted(d.parts) for d in docs if len(d.parts) >= 2]

    def sampler(rng: np.random.Generator):
        instances = []
        for parts in parts_lists:
            k = int(rng.integers(len(parts)))
            instances.append(([p for i, p in enumerate(parts) if i != k], parts[k]))
        return instances

    return sampler


def _docname_instances(docs):
    return [(sorted(d.parts), d.doc_name) for d in docs if d.doc_name and d.parts]


def _fixed_sampler(instances):
    def sampler(rng: np.random.Generator):
        return list(instances)

    return sampler


def two_parts_trial(
    corpus: Corpus,
    table: EmbeddingTable,
    task_seed: int,
    trial_seed: int,
    mlp_cfg: MLPTrainConfig | None = None,
    pairs=None,
) -> float:
    """One Two Parts trial: sub-split the frozen pair set, train the pair
    classifier, return held-out accuracy."""
    if pairs is None:
        pairs = sample_two_parts(corpus, "test", task_seed)
    sub = subsplit_pairs(pairs, trial_seed)
    params, _ = mlp_train(sub["train"], sub["validation"], table, trial_seed, mlp_cfg)
    return mlp_accuracy(params, sub["test"], table)


def ranking_trial(
    task: str,
    corpus: Corpus,
    table: EmbeddingTable,
    enc_cfg: SetEncoderConfig,
    task_seed: int,
    trial_seed: int,
    collect_predictions: bool = False,
) -> tuple[float, list[RankingPrediction]]:
    """One ranking trial: train the set encoder on the train split, early
    stop on validation, evaluate on the trial's frozen test batches."""
    if task == "missing-part":
        train_docs = [d for d in corpus.docs_in_split("train") if len(d.parts) >= 2]
        val_docs = [d for d in corpus.docs_in_split("validation") if len(d.parts) >= 2]
        sampler = _missing_part_sampler(train_docs)
        val_rng = np.random.default_rng([task_seed, 17])
        val_instances = _missing_part_sampler(val_docs)(val_rng)
        batches = build_missing_part_batches(corpus, "test", trial_seed)
    elif task == "doc-name":
        sampler = _fixed_sampler(_docname_instances(corpus.docs_in_split("train")))
        val_instances = _docname_instances(corpus.docs_in_split("validation"))
        batches = build_docname_batches(corpus, "test", trial_seed)
    else:
        raise ValueError(f"unknown ranking task {task!r}")
    params, _ = set_encoder_train(sampler, val_instances, table, enc_cfg, trial_seed)
    return rank_batches(params, batches, table, collect_predictions)


def evaluate_task(
    task: str,
    corpus: Corpus,
    table: EmbeddingTable,
    trials: int = 5,
    base_seed: int = 0,
    task_seed: int = 0,
    mlp_cfg: MLPTrainConfig | None = None,
    enc_cfg: SetEncoderConfig | None = None,
    predictions_out: list | None = None,
) -> TrialReport:
    """Run the trial protocol for one task over one embedding source."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")
    seeds = [base_seed + i for i in range(trials)]
    accuracies = []
    if task == "two-parts":
        pairs = sample_two_parts(corpus, "test", task_seed)
        for seed in seeds:
            accuracies.append(two_parts_trial(corpus, table, task_seed, seed,
                                              mlp_cfg, pairs=pairs))
    else:
        enc_cfg = enc_cfg or SetEncoderConfig(dim=table.dim)
        collect = predictions_out is not None
        for seed in seeds:
            acc, preds = ranking_trial(task, corpus, table, enc_cfg, task_seed, seed,
                                       collect_predictions=collect and seed == seeds[-1])
            accuracies.append(acc)
            if collect and preds:
                predictions_out.extend(preds)
    return TrialReport.from_accuracies(task, accuracies, seeds)


def write_predictions_jsonl(predictions: list[RankingPrediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in predictions:
            fh.write(json.dumps(asdict(p), ensure_ascii=False))
            fh.write("\n")


def read_predictions_jsonl(path: str | Path) -> list[RankingPrediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(RankingPrediction(**json.loads(line)))
    return out
