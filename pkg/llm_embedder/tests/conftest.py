import pytest
import torch
import transformers
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.normalizers import BertNormalizer
from tokenizers.pre_tokenizers import BertPreTokenizer
from tokenizers.processors import TemplateProcessing
from transformers import DistilBertConfig, DistilBertForMaskedLM, PreTrainedTokenizerFast

transformers.logging.set_verbosity_error()

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "an", "assembly", "with", "name", "contains", "the", "following", "parts",
    ",", ".", ":",
    "gear", "wheel", "pin", "rod", "frame", "top", "left", "right", "bracket",
    "mount", "arm", "base", "cover", "panel", "housing", "shaft", "bearing",
    "##s", "##x", "##1", "##2", "##3",
]


def _build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {token: i for i, token in enumerate(VOCAB)}
    core = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    core.normalizer = BertNormalizer(lowercase=True)
    core.pre_tokenizer = BertPreTokenizer()
    core.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=core, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
        model_max_length=48,
    )


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized masked-LM checkpoint, built offline."""
    model_dir = tmp_path_factory.mktemp("tiny-distilbert")
    tokenizer = _build_tokenizer()
    config = DistilBertConfig(
        vocab_size=len(VOCAB), dim=32, hidden_dim=64, n_layers=3, n_heads=2,
        max_position_embeddings=48,
    )
    torch.manual_seed(0)
    model = DistilBertForMaskedLM(config)
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture(scope="session")
def template_lines():
    parts_pool = ["gear", "wheel", "pin", "rod", "frame", "bracket", "mount",
                  "arm", "base", "cover", "panel", "housing", "shaft", "bearing"]
    lines = []
    for i in range(48):
        a = parts_pool[i % len(parts_pool)]
        b = parts_pool[(i * 5 + 3) % len(parts_pool)]
        lines.append(
            f"an assembly with name {parts_pool[(i * 7) % len(parts_pool)]} "
            f"contains the following parts: {a}, {b}."
        )
    return lines
