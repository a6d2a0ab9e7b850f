"""Masked-language-model fine-tuning over the template corpus,
line by line, mirroring the stock fine-tuning script defaults:
15% masking, AdamW at 5e-5, batch size 8.
"""

from __future__ import annotations

import logging
from pathlib import Path

import torch
from torch.utils.data import DataLoader, Dataset
from transformers import (
    AutoModelForMaskedLM,
    AutoTokenizer,
    DataCollatorForLanguageModeling,
)

logger = logging.getLogger(__name__)

MLM_PROBABILITY = 0.15
LEARNING_RATE = 5e-5
BATCH_SIZE = 8


class _LineDataset(Dataset):
    def __init__(self, lines: list[str], tokenizer, max_length: int):
        self.encodings = [
            tokenizer(line, truncation=True, max_length=max_length)
            for line in lines
        ]

    def __len__(self):
        return len(self.encodings)

    def __getitem__(self, idx):
        return {k: torch.tensor(v) for k, v in self.encodings[idx].items()}


def _context_limit(tokenizer, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None)
    tok_limit = getattr(tokenizer, "model_max_length", None)
    candidates = [x for x in (limit, tok_limit) if x and x < 1_000_000]
    return min(candidates) if candidates else 512


def finetune_mlm(
    corpus_path: str | Path,
    out_dir: str | Path,
    model_id: str,
    epochs: int = 3,
    seed: int = 0,
) -> str:
    """Fine-tune and save a model directory loadable by the embedder.

    ``epochs=0`` saves the weights unchanged.
    """
    lines = [l for l in Path(corpus_path).read_text("utf-8").splitlines() if l.strip()]
    if not lines:
        raise ValueError(f"empty fine-tuning corpus: {corpus_path}")

    torch.manual_seed(seed)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForMaskedLM.from_pretrained(model_id)

    if epochs > 0:
        dataset = _LineDataset(lines, tokenizer, _context_limit(tokenizer, model))
        collator = DataCollatorForLanguageModeling(tokenizer, mlm_probability=MLM_PROBABILITY)
        generator = torch.Generator().manual_seed(seed)
        loader = DataLoader(dataset, batch_size=BATCH_SIZE, shuffle=True,
                            collate_fn=collator, generator=generator)
        optimizer = torch.optim.AdamW(model.parameters(), lr=LEARNING_RATE)
        model.train()
        for epoch in range(epochs):
            total = 0.0
            for batch in loader:
                optimizer.zero_grad()
                loss = model(**batch).loss
                loss.backward()
                optimizer.step()
                total += float(loss.detach())
            logger.info("epoch %d mean loss %.4f", epoch, total / len(loader))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return str(out_dir)


def masked_eval_loss(model_id: str, lines: list[str], seed: int = 0) -> float:
    """Mean masked-token loss over held-out lines with seeded masking."""
    if not lines:
        raise ValueError("no evaluation lines")
    torch.manual_seed(seed)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForMaskedLM.from_pretrained(model_id)
    model.eval()
    dataset = _LineDataset(lines, tokenizer, _context_limit(tokenizer, model))
    collator = DataCollatorForLanguageModeling(tokenizer, mlm_probability=MLM_PROBABILITY)
    loader = DataLoader(dataset, batch_size=BATCH_SIZE, shuffle=False, collate_fn=collator)
    total = 0.0
    count = 0
    with torch.no_grad():
        for batch in loader:
            out = model(**batch)
            total += float(out.loss) * batch["input_ids"].shape[0]
            count += batch["input_ids"].shape[0]
    return total / count
