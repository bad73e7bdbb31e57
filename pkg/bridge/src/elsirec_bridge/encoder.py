"""Document encoding with pretrained transformer checkpoints.

Inference only; abstracts are truncated to 512 tokens and pooled into one
vector per document. The `pooler` strategy uses the model's own pooler
(dense + Tanh over the first token), so its output is already activated;
first_token/mean pool the last hidden state and apply Tanh here when
requested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

POOLING_STRATEGIES = ("pooler", "first_token", "mean")


def checkpoint_aliases() -> dict[str, str]:
    """Pinned alias -> published checkpoint mapping."""
    text = resources.files("elsirec_bridge").joinpath("checkpoints.json").read_text("utf-8")
    return json.loads(text)


def resolve_checkpoint(model_name: str) -> str:
    """Resolve an alias to its pinned checkpoint; paths pass through."""
    aliases = checkpoint_aliases()
    if model_name in aliases:
        return aliases[model_name]
    if Path(model_name).exists():
        return model_name
    raise ValueError(
        f"unknown model {model_name!r}: use one of {sorted(aliases)} or a "
        f"local checkpoint directory"
    )


@dataclass(frozen=True)
class EncoderSpec:
    model_name: str = "pubmedbert"
    max_tokens: int = 512
    pooling: str = "pooler"
    apply_tanh: bool = True
    batch_size: int = 10

    def __post_init__(self):
        if not 1 <= self.max_tokens <= 512:
            raise ValueError("max_tokens must be in 1..512")
        if self.pooling not in POOLING_STRATEGIES:
            raise ValueError(f"pooling must be one of {POOLING_STRATEGIES}")

    @property
    def activated(self) -> bool:
        # the pooler includes its own Tanh; never double-apply
        return self.pooling == "pooler" or self.apply_tanh


class DocumentEncoder:
    """Loads one checkpoint and encodes batches of texts deterministically."""

    def __init__(self, spec: EncoderSpec):
        self.spec = spec
        checkpoint = resolve_checkpoint(spec.model_name)
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
            self.model = AutoModel.from_pretrained(checkpoint)
        except (OSError, ValueError) as exc:
            raise RuntimeError(
                f"checkpoint {checkpoint!r} is not available locally; download "
                f"it first (e.g. huggingface-cli download {checkpoint}) or pass "
                f"a local checkpoint directory"
            ) from exc
        self.model.eval()
        self.encoder_name = f"{spec.model_name}:{spec.pooling}"

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    @torch.no_grad()
    def encode_batch(self, texts: list[str]) -> np.ndarray:
        """One pooled (and, per spec, activated) vector per text."""
        tokens = self.tokenizer(
            texts,
            truncation=True,
            max_length=self.spec.max_tokens,
            padding="max_length",
            return_tensors="pt",
        )
        output = self.model(**tokens)
        hidden = output.last_hidden_state  # batch x max_tokens x hidden
        if self.spec.pooling == "pooler":
            pooled = output.pooler_output
        elif self.spec.pooling == "first_token":
            pooled = hidden[:, 0, :]
        else:
            mask = tokens["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
        if self.spec.pooling != "pooler" and self.spec.apply_tanh:
            pooled = torch.tanh(pooled)
        return pooled.numpy().astype(np.float64)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = []
        for start in range(0, len(texts), self.spec.batch_size):
            rows.append(self.encode_batch(texts[start : start + self.spec.batch_size]))
        return np.concatenate(rows, axis=0)


def read_corpus_jsonl(path: str | Path) -> tuple[list[tuple[str, str]], list[int]]:
    """Parse the engine's corpus JSONL schema: id + abstract per line.

    Returns ((id, abstract) pairs, row numbers skipped for empty abstracts).
    """
    records: list[tuple[str, str]] = []
    skipped: list[int] = []
    seen: set[str] = set()
    for row_no, line in enumerate(
        Path(path).read_text("utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        obj = json.loads(line)
        rid = str(obj["id"])
        abstract = str(obj.get("abstract") or "")
        if not abstract.strip():
            skipped.append(row_no)
            continue
        if rid in seen:
            continue
        seen.add(rid)
        records.append((rid, abstract))
    return records, skipped


def encode_corpus(
    corpus_path: str | Path, spec: EncoderSpec, out_path: str | Path
) -> dict:
    """Encode every abstract in a corpus file into an interchange file."""
    from .interchange import write_interchange

    records, skipped = read_corpus_jsonl(corpus_path)
    if not records:
        raise ValueError(f"no encodable records in {corpus_path}")
    encoder = DocumentEncoder(spec)
    values = encoder.encode_texts([abstract for _, abstract in records])
    write_interchange(
        out_path,
        ids=[rid for rid, _ in records],
        values=values,
        encoder_name=encoder.encoder_name,
        activated=spec.activated,
    )
    return {
        "encoded": len(records),
        "skipped_empty": len(skipped),
        "dim": int(values.shape[1]),
        "encoder": encoder.encoder_name,
        "activated": spec.activated,
        "out": str(out_path),
    }
