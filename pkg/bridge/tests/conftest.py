import json
from pathlib import Path

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

# Words appearing in the sample abstracts, so the test tokenizer has
# real (non-UNK) pieces to work with.
VOCAB_WORDS = [
    "synthetic", "biology", "gene", "circuit", "plasmid", "promoter",
    "ethics", "policy", "governance", "biosafety", "oversight", "risk",
    "the", "of", "and", "for", "in", "we", "study", "design", "cell",
    "protein", "pathway", "social", "impact", "research", "abstract",
]


@pytest.fixture(scope="session")
def local_checkpoint(tmp_path_factory) -> Path:
    """A BERT-shaped checkpoint saved locally: hidden size 768 like the
    published models, but tiny in depth and vocabulary so tests stay fast."""
    out = tmp_path_factory.mktemp("tiny-bert")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + VOCAB_WORDS
    (out / "vocab.txt").write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(out / "vocab.txt"), do_lower_case=True)
    tokenizer.save_pretrained(out)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=256,
        max_position_embeddings=512,
    )
    model = BertModel(config)
    model.save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def sample_corpus(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("corpus") / "sample.jsonl"
    abstracts = [
        "synthetic biology gene circuit design",
        "the ethics of gene design and policy",
        "plasmid promoter pathway study",
        "governance and oversight of synthetic biology research",
        "biosafety risk in cell protein design",
        "we study the social impact of research",
        "promoter circuit protein pathway",
        "policy for synthetic biology oversight",
        "gene plasmid cell design study",
        "the abstract of a biology research study",
    ]
    lines = [
        json.dumps({"id": f"S{i:02d}", "abstract": a})
        for i, a in enumerate(abstracts)
    ]
    path.write_text("\n".join(lines) + "\n")
    return path
