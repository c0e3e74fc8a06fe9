from pathlib import Path

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly-initialised layout-aware model saved locally, so
    tests run without network access."""
    from transformers import BertTokenizer, LayoutLMConfig, LayoutLMModel

    root = tmp_path_factory.mktemp("tiny-layout-model")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "name", "date", "total", "ref", "item", "code", ":",
        "alpha", "bravo", "cedar", "delta", "ember", "frost", "gamma", "haven",
        "iris", "jade", "karma", "lumen", "maple", "onyx", "plume", "quill",
        "##s", "##:",
    ]
    (root / "vocab.txt").write_text("\n".join(vocab), encoding="utf-8")
    tokenizer = BertTokenizer(str(root / "vocab.txt"), do_lower_case=True)
    tokenizer.save_pretrained(root)
    torch.manual_seed(1234)
    config = LayoutLMConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=48,
        max_2d_position_embeddings=1024,
    )
    LayoutLMModel(config).save_pretrained(root)
    return str(root)


@pytest.fixture(scope="session")
def sample_corpus_dir(tmp_path_factory):
    """Five documents in the internal annotation-record format, produced
    by the primary toolkit (the integration partner)."""
    from laygraph.annotation_io import write_internal
    from laygraph.synth import make_synthetic_corpus

    root = tmp_path_factory.mktemp("sample-corpus")
    corpus = make_synthetic_corpus(31, 6, 22, n_train=1)
    docs = (corpus.train + corpus.test)[:5]
    for doc in docs:
        (root / f"{doc.id}.json").write_text(write_internal(doc), encoding="utf-8")
    return str(root)
