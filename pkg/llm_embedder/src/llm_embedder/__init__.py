"""Transformer embedding exporter and masked-LM fine-tuning.

Communicates with the evaluation toolkit exclusively through files: a
string list in (one string per line) and an embedding table in the
shared text interchange format out.
"""

__version__ = "0.1.0"

from llm_embedder.embedder import EmbedJob, compute_embeddings, embed_strings
from llm_embedder.finetune import finetune_mlm, masked_eval_loss

__all__ = [
    "EmbedJob",
    "compute_embeddings",
    "embed_strings",
    "finetune_mlm",
    "masked_eval_loss",
]
