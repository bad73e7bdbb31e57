"""Tokenization, vocabulary construction, and bag-of-words vectorization.

Feeds the LDA stage. Token streams are truncated to a fixed budget
(default 512 tokens) after lowercasing and filtering.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

_WORD_RE = re.compile(r"[0-9A-Za-z]+")


def load_default_stopwords() -> frozenset[str]:
    """Small English stopword list shipped with the package."""
    text = resources.files("elsirec.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(tok for tok in text.split() if tok)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stopword file, one token per line."""
    return frozenset(
        tok for tok in Path(path).read_text("utf-8").split() if tok
    )


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    min_token_len: int = 2
    stopwords: frozenset[str] = field(default_factory=frozenset)
    max_tokens: int = 512

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.min_token_len < 1:
            raise ConfigError("min_token_len must be >= 1")


@dataclass
class Vocabulary:
    """Bijection token <-> dense index plus per-token document frequencies.

    Indices are exactly 0..V-1, assigned in lexicographic token order.
    """

    token_to_index: dict[str, int]
    doc_frequency: dict[str, int]

    def __len__(self) -> int:
        return len(self.token_to_index)

    @property
    def index_to_token(self) -> list[str]:
        out = [""] * len(self.token_to_index)
        for tok, idx in self.token_to_index.items():
            out[idx] = tok
        return out

    def dump(self, path: str | Path) -> None:
        """Write `index<TAB>token<TAB>doc_frequency` lines."""
        lines = [
            f"{idx}\t{tok}\t{self.doc_frequency[tok]}"
            for tok, idx in sorted(self.token_to_index.items(), key=lambda kv: kv[1])
        ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        token_to_index: dict[str, int] = {}
        doc_frequency: dict[str, int] = {}
        for line in Path(path).read_text("utf-8").splitlines():
            if not line.strip():
                continue
            idx_s, tok, df_s = line.split("\t")
            token_to_index[tok] = int(idx_s)
            doc_frequency[tok] = int(df_s)
        vocab = cls(token_to_index=token_to_index, doc_frequency=doc_frequency)
        indices = sorted(token_to_index.values())
        if indices != list(range(len(indices))):
            raise ConfigError(f"vocabulary file {path} has gapped or duplicate indices")
        return vocab


@dataclass
class BowDocument:
    """Sparse token-index -> count map for one document."""

    doc_id: str
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def tokenize(text: str, config: TokenizerConfig) -> list[str]:
    """Split on non-alphanumeric boundaries, filter, truncate.

    Filtering (length, stopwords) happens before truncation so the token
    budget is spent on retained tokens only.
    """
    tokens = _WORD_RE.findall(text)
    if config.lowercase:
        tokens = [t.lower() for t in tokens]
    tokens = [
        t
        for t in tokens
        if len(t) >= config.min_token_len and t not in config.stopwords
    ]
    return tokens[: config.max_tokens]


def build_vocabulary(
    docs: list[list[str]], min_df: int = 2, max_df_fraction: float = 0.95
) -> Vocabulary:
    """Build a vocabulary from tokenized documents with df thresholds.

    Tokens kept when min_df <= document frequency <= max_df_fraction * |docs|.
    Indices are assigned in lexicographic order for determinism.
    """
    if not docs:
        raise ConfigError("cannot build a vocabulary from zero documents")
    if not (0.0 < max_df_fraction <= 1.0):
        raise ConfigError("max_df_fraction must be in (0, 1]")
    df: dict[str, int] = {}
    for tokens in docs:
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
    max_df = max_df_fraction * len(docs)
    kept = sorted(t for t, d in df.items() if d >= min_df and d <= max_df)
    if not kept:
        raise ConfigError(
            "vocabulary is empty after document-frequency filtering; "
            "relax min_df/max_df_fraction"
        )
    return Vocabulary(
        token_to_index={tok: i for i, tok in enumerate(kept)},
        doc_frequency={tok: df[tok] for tok in kept},
    )


def vectorize(tokens: list[str], vocab: Vocabulary, doc_id: str = "") -> BowDocument | None:
    """Count in-vocabulary tokens; returns None when nothing survives.

    A None result flags the document as empty; callers exclude it from
    LDA and report it.
    """
    counts: dict[int, int] = {}
    for tok in tokens:
        idx = vocab.token_to_index.get(tok)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        return None
    return BowDocument(doc_id=doc_id, counts=counts)
