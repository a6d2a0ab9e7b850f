"""String embedding: mean pooling of the second-to-last encoder layer.

Each string is tokenized with the model's own tokenizer; the hidden
states of the second-to-last layer are averaged over non-padding tokens
into one vector per string. Inference runs in eval mode with gradients
off, so outputs are deterministic and independent of batch grouping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from llm_embedder.table_io import write_table

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "distilbert-base-uncased"


@dataclass
class EmbedJob:
    strings: list[str]
    output_path: str
    model: str = DEFAULT_MODEL
    batch_size: int = 32


def _max_length(tokenizer, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None)
    tok_limit = getattr(tokenizer, "model_max_length", None)
    candidates = [x for x in (limit, tok_limit) if x and x < 1_000_000]
    return min(candidates) if candidates else 512


def compute_embeddings(
    strings: list[str], model_id: str = DEFAULT_MODEL, batch_size: int = 32
) -> np.ndarray:
    """(n_strings, hidden) matrix of mean-pooled second-to-last states."""
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id)
    model.eval()
    max_length = _max_length(tokenizer, model)

    vectors: list[np.ndarray] = []
    truncated = 0
    with torch.no_grad():
        for start in range(0, len(strings), batch_size):
            batch = strings[start : start + batch_size]
            lengths = [len(ids) for ids in tokenizer(batch)["input_ids"]]
            truncated += sum(1 for n in lengths if n > max_length)
            enc = tokenizer(batch, padding=True, truncation=True,
                            max_length=max_length, return_tensors="pt")
            out = model(**enc, output_hidden_states=True)
            hidden = out.hidden_states[-2]                     # (B, T, H)
            mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
            vectors.append(pooled.to(torch.float32).numpy())
    if truncated:
        logger.warning("%d strings exceeded the model context and were truncated", truncated)
    return np.concatenate(vectors, axis=0)


def embed_strings(job: EmbedJob) -> str:
    """Embed every distinct string and write the interchange table file."""
    if not job.strings:
        raise ValueError("no strings to embed")
    distinct = sorted(set(job.strings))
    matrix = compute_embeddings(distinct, job.model, job.batch_size)
    dim = matrix.shape[1]
    entries = {s: matrix[i] for i, s in enumerate(distinct)}
    write_table(entries, dim, job.output_path)
    return job.output_path


def read_string_list(path: str | Path) -> list[str]:
    """One string per line, UTF-8; blank lines are skipped."""
    lines = Path(path).read_text("utf-8").splitlines()
    return [line for line in lines if line.strip()]
