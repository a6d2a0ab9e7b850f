"""Toolkit for mining natural-language part and assembly names from CAD
STEP exports and evaluating embedding models on self-supervised tasks."""

__version__ = "0.1.0"

from cadtext.step_extract import (
    ScanResult,
    StepNameOccurrence,
    StepParseError,
    StepDecodeError,
    aggregate_document,
    decode_step_string,
    scan_step_file,
)
from cadtext.corpus import (
    Corpus,
    DocumentRecord,
    deduplicate,
    emit_finetune_corpus,
    is_default_name,
    normalize_string,
    split_corpus,
    strip_copy_affixes,
)
from cadtext.embeddings import (
    EmbeddingTable,
    embed_string,
    load_embedding_table,
    save_embedding_table,
    tokenize_wordpunct,
)

__all__ = [
    "ScanResult",
    "StepNameOccurrence",
    "StepParseError",
    "StepDecodeError",
    "aggregate_document",
    "decode_step_string",
    "scan_step_file",
    "Corpus",
    "DocumentRecord",
    "deduplicate",
    "emit_finetune_corpus",
    "is_default_name",
    "normalize_string",
    "split_corpus",
    "strip_copy_affixes",
    "EmbeddingTable",
    "embed_string",
    "load_embedding_table",
    "save_embedding_table",
    "tokenize_wordpunct",
]
