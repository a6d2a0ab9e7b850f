"""Subword skip-gram / cbow training with negative sampling, from scratch.

Token vectors are the sum of a word vector and hashed character n-gram
bucket vectors; out-of-vocabulary tokens at query time compose from the
buckets alone. Training is minibatched SGD with a seeded shuffle, so a
single-threaded run is exactly reproducible. Noise tokens are drawn from
the unigram distribution raised to the 0.75 power.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from cadtext.embeddings import (
    BUCKET_KEY_PREFIX,
    EmbeddingTable,
    SubwordInfo,
    ngram_hashes,
    tokenize_wordpunct,
)

NOISE_POWER = 0.75
MIN_LR_FACTOR = 1e-4


@dataclass
class SkipGramConfig:
    dim: int = 128
    window: int = 6
    mode: str = "skipgram"  # or "cbow"
    negatives: int = 5
    ngram_min: int = 3
    ngram_max: int = 6
    bucket_count: int = 2_000_000
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    min_count: int = 1
    batch_size: int = 256

    def __post_init__(self):
        if self.mode not in ("skipgram", "cbow"):
            raise ValueError(f"mode must be 'skipgram' or 'cbow', got {self.mode!r}")
        if self.ngram_min > self.ngram_max:
            raise ValueError("ngram_min must be <= ngram_max")


def negative_sampling_loss(
    h: np.ndarray, u_pos: np.ndarray, u_negs: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss and analytic gradients for one (hidden, context, noise) example.

    loss = -log sigmoid(u_pos . h) - sum_k log sigmoid(-u_negs[k] . h)

    Returns (loss, g_h, g_u_pos, g_u_negs). The hidden vector is a sum of
    word and n-gram vectors, so its gradient passes to each constituent
    unchanged.
    """
    h = np.asarray(h, dtype=np.float64)
    u_pos = np.asarray(u_pos, dtype=np.float64)
    u_negs = np.asarray(u_negs, dtype=np.float64)
    pos_logit = float(u_pos @ h)
    neg_logits = u_negs @ h
    # log sigmoid computed stably: -log sigmoid(x) = logaddexp(0, -x)
    loss = np.logaddexp(0.0, -pos_logit) + np.sum(np.logaddexp(0.0, neg_logits))
    g_pos = _sigmoid(pos_logit) - 1.0
    g_negs = _sigmoid(neg_logits)
    g_h = g_pos * u_pos + g_negs @ u_negs
    g_u_pos = g_pos * h
    g_u_negs = g_negs[:, None] * h[None, :]
    return float(loss), g_h, g_u_pos, g_u_negs


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


@dataclass
class _Vocab:
    tokens: list[str]
    index: dict[str, int]
    bucket_rows: list[np.ndarray]  # per token, compact rows into the bucket matrix
    bucket_ids: np.ndarray         # compact row -> original bucket id
    noise_cdf: np.ndarray


def _build_vocab(lines: list[str], cfg: SkipGramConfig) -> tuple[_Vocab, list[np.ndarray]]:
    counts: Counter[str] = Counter()
    tokenized = [tokenize_wordpunct(line) for line in lines]
    for tokens in tokenized:
        counts.update(tokens)
    kept = sorted(
        (t for t, c in counts.items() if c >= cfg.min_count),
        key=lambda t: (-counts[t], t),
    )
    if not kept:
        raise ValueError("corpus produced an empty vocabulary")
    index = {t: i for i, t in enumerate(kept)}

    bucket_map: dict[int, int] = {}
    bucket_rows: list[np.ndarray] = []
    for token in kept:
        rows = []
        for bucket in ngram_hashes(token, cfg.ngram_min, cfg.ngram_max, cfg.bucket_count):
            if bucket not in bucket_map:
                bucket_map[bucket] = len(bucket_map)
            rows.append(bucket_map[bucket])
        bucket_rows.append(np.array(rows, dtype=np.int64))
    bucket_ids = np.empty(len(bucket_map), dtype=np.int64)
    for bucket, row in bucket_map.items():
        bucket_ids[row] = bucket

    freq = np.array([counts[t] for t in kept], dtype=np.float64)
    noise = freq**NOISE_POWER
    noise_cdf = np.cumsum(noise / noise.sum())

    vocab = _Vocab(
        tokens=kept,
        index=index,
        bucket_rows=bucket_rows,
        bucket_ids=bucket_ids,
        noise_cdf=noise_cdf,
    )
    sequences = [
        np.array([index[t] for t in tokens if t in index], dtype=np.int64)
        for tokens in tokenized
    ]
    return vocab, sequences


@dataclass
class _EpochExamples:
    """Ragged (input units -> predicted token) examples for one epoch.

    skipgram: one example per (center, context) pair, one unit (the center).
    cbow: one example per position, units are the whole context window.
    """

    targets: np.ndarray       # (n_examples,)
    unit_tokens: np.ndarray   # flattened input token ids
    offsets: np.ndarray       # (n_examples + 1,) into unit_tokens


def _epoch_examples(
    sequences: list[np.ndarray], cfg: SkipGramConfig, rng: np.random.Generator
) -> _EpochExamples:
    targets: list[int] = []
    units: list[int] = []
    sizes: list[int] = []
    order = rng.permutation(len(sequences))
    for seq_idx in order:
        seq = sequences[seq_idx]
        n = len(seq)
        if n < 2:
            continue
        spans = rng.integers(1, cfg.window + 1, size=n)
        for t in range(n):
            lo = max(0, t - spans[t])
            hi = min(n, t + spans[t] + 1)
            window = [int(seq[c]) for c in range(lo, hi) if c != t]
            if not window:
                continue
            if cfg.mode == "skipgram":
                for ctx in window:
                    targets.append(ctx)
                    units.append(int(seq[t]))
                    sizes.append(1)
            else:
                targets.append(int(seq[t]))
                units.extend(window)
                sizes.append(len(window))
    offsets = np.zeros(len(targets) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return _EpochExamples(
        targets=np.array(targets, dtype=np.int64),
        unit_tokens=np.array(units, dtype=np.int64),
        offsets=offsets,
    )


def _unit_hidden(
    unit_tokens: np.ndarray, w_in: np.ndarray, b_in: np.ndarray, vocab: _Vocab
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Composed (word + n-gram) vectors per unit, plus flat scatter arrays
    (unit position, bucket row) for the gradient pass."""
    h = w_in[unit_tokens].copy()
    pos_chunks: list[np.ndarray] = []
    row_chunks: list[np.ndarray] = []
    for i, tok in enumerate(unit_tokens):
        rows = vocab.bucket_rows[tok]
        if len(rows):
            pos_chunks.append(np.full(len(rows), i, dtype=np.int64))
            row_chunks.append(rows)
    if pos_chunks:
        pos = np.concatenate(pos_chunks)
        rows = np.concatenate(row_chunks)
        np.add.at(h, pos, b_in[rows])
    else:
        pos = np.empty(0, dtype=np.int64)
        rows = np.empty(0, dtype=np.int64)
    return h, pos, rows


def train_subword_skipgram(
    corpus_lines: list[str],
    cfg: SkipGramConfig | None = None,
    with_history: bool = False,
):
    """Train token + n-gram bucket vectors on fine-tuning corpus lines.

    Returns the trained EmbeddingTable (and the per-epoch mean losses when
    ``with_history`` is set). Only buckets touched by the training
    vocabulary are kept, so unseen n-grams contribute zero at query time.
    """
    cfg = cfg or SkipGramConfig()
    vocab, sequences = _build_vocab(corpus_lines, cfg)
    if not any(len(seq) >= 2 for seq in sequences):
        raise ValueError("corpus smaller than one context window, nothing to train on")

    rng = np.random.default_rng(cfg.seed)
    n_vocab = len(vocab.tokens)
    init = 0.5 / cfg.dim
    w_in = rng.uniform(-init, init, size=(n_vocab, cfg.dim)).astype(np.float32)
    b_in = rng.uniform(-init, init, size=(len(vocab.bucket_ids), cfg.dim)).astype(np.float32)
    w_out = np.zeros((n_vocab, cfg.dim), dtype=np.float32)

    history: list[float] = []
    for epoch in range(cfg.epochs):
        examples = _epoch_examples(sequences, cfg, rng)
        n_ex = len(examples.targets)
        epoch_loss = 0.0
        n_batches = max(1, -(-n_ex // cfg.batch_size))
        for b_idx in range(n_batches):
            lo = b_idx * cfg.batch_size
            hi = min(n_ex, lo + cfg.batch_size)
            if lo >= hi:
                continue
            progress = (epoch + b_idx / n_batches) / cfg.epochs
            lr = cfg.learning_rate * max(MIN_LR_FACTOR, 1.0 - progress)
            # mean-gradient minibatch step: stable under the repeated rows
            # that sequential SGD would have updated one at a time
            step = lr / (hi - lo)

            batch = hi - lo
            out = examples.targets[lo:hi]
            u_lo, u_hi = examples.offsets[lo], examples.offsets[hi]
            unit_tokens = examples.unit_tokens[u_lo:u_hi]
            sizes = np.diff(examples.offsets[lo : hi + 1])
            unit_pos = np.repeat(np.arange(batch), sizes)
            unit_scale = (1.0 / sizes[unit_pos]).astype(np.float32)

            h_units, bpos, brows = _unit_hidden(unit_tokens, w_in, b_in, vocab)
            h = np.zeros((batch, cfg.dim), dtype=np.float32)
            np.add.at(h, unit_pos, h_units * unit_scale[:, None])

            negs = _sample_noise(vocab, (batch, cfg.negatives), rng)
            u_pos = w_out[out]
            u_neg = w_out[negs]

            pos_logit = np.einsum("bd,bd->b", h, u_pos)
            neg_logit = np.einsum("bd,bkd->bk", h, u_neg)
            epoch_loss += float(
                np.sum(np.logaddexp(0.0, -pos_logit.astype(np.float64)))
                + np.sum(np.logaddexp(0.0, neg_logit.astype(np.float64)))
            )

            g_pos = (_sigmoid(pos_logit) - 1.0).astype(np.float32)
            g_neg = _sigmoid(neg_logit).astype(np.float32)
            grad_h = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)

            np.add.at(w_out, out, (-step * g_pos)[:, None] * h)
            np.add.at(
                w_out,
                negs.reshape(-1),
                (-step * g_neg.reshape(-1))[:, None] * np.repeat(h, cfg.negatives, axis=0),
            )
            grad_units = grad_h[unit_pos] * unit_scale[:, None]
            np.add.at(w_in, unit_tokens, -step * grad_units)
            if len(bpos):
                np.add.at(b_in, brows, -step * grad_units[bpos])
        history.append(epoch_loss / max(1, n_ex))

    entries: dict[str, np.ndarray] = {}
    for i, token in enumerate(vocab.tokens):
        entries[token] = w_in[i].copy()
    for row, bucket in enumerate(vocab.bucket_ids):
        entries[f"{BUCKET_KEY_PREFIX}{bucket}"] = b_in[row].copy()
    table = EmbeddingTable(
        dim=cfg.dim,
        entries=entries,
        provenance="subword-skipgram",
        subword=SubwordInfo(cfg.ngram_min, cfg.ngram_max, cfg.bucket_count),
    )
    if with_history:
        return table, history
    return table


def _sample_noise(vocab: _Vocab, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return np.searchsorted(vocab.noise_cdf, u).astype(np.int64)
