"""Session fixtures: a tiny randomly-initialized BERT checkpoint (built
offline, no hub access) plus engine-format input files."""

import json
import os

import pytest
import torch

os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_OFFLINE", "1")

WORDS = [
    "mountain", "bike", "red", "path", "river", "bridge", "stone", "tower",
    "alpha", "beta", "gamma", "delta",
]
SUBWORDS = ["##s", "##ing", "##ed"]
HIDDEN = 32


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    from tokenizers import Tokenizer, normalizers, pre_tokenizers, processors
    from tokenizers.models import WordPiece
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("tinybert") / "checkpoint"
    vocab_list = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS + SUBWORDS
    vocab = {t: i for i, t in enumerate(vocab_list)}

    tok = Tokenizer(WordPiece(vocab=vocab, unk_token="[UNK]"))
    tok.normalizer = normalizers.BertNormalizer(lowercase=True)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )

    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(vocab_list),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    model = BertModel(config)
    model.save_pretrained(out)
    fast.save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def engine_vocab(tmp_path_factory):
    # Engine vocabulary: plain words, one per line, line number = term id.
    path = tmp_path_factory.mktemp("engine") / "vocab.txt"
    path.write_text("\n".join(WORDS) + "\n")
    return path


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    # image_embedding_ref equals the record id so an item-level export can
    # serve directly as the engine's --image-embeddings file.
    path = tmp_path_factory.mktemp("inputs") / "corpus.jsonl"
    captions = [
        "mountain bike on a red path",
        "stone bridge over the river",
        "tower beside the bridge",
        "red bikes near the mountain path",
        "alpha beta gamma",
    ]
    with open(path, "w", encoding="utf-8") as f:
        for i, caption in enumerate(captions):
            rec = {"id": f"d{i}", "caption": caption, "image_embedding_ref": f"d{i}"}
            f.write(json.dumps(rec) + "\n")
    return path


@pytest.fixture(scope="session")
def queries_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("inputs") / "queries.jsonl"
    rows = [
        {"id": "q0", "page_title": "mountain bike", "section_title": "red path",
         "context_page_description": "EXCLUDED", "context_section_description": "river"},
        {"id": "q1", "page_title": "stone tower", "section_title": "bridge"},
        {"id": "q2", "page_title": "delta"},
    ]
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path
