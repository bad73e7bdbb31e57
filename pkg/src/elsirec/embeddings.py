"""Document embedding storage: pooling, Tanh activation, interchange format.

The interchange file is the boundary with any external encoder: binary,
magic `EMB1`, little-endian, 32-bit values. A JSONL variant is accepted on
read for debuggability.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1


@dataclass
class TokenEmbeddingBatch:
    """Token-level embeddings for N documents: N x T x D values plus mask."""

    ids: list[str]
    values: np.ndarray  # N x T x D
    attention_mask: np.ndarray  # N x T, bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.attention_mask = np.asarray(self.attention_mask, dtype=bool)
        if self.values.ndim != 3:
            raise ConfigError("token embedding batch must be N x T x D")
        if self.attention_mask.shape != self.values.shape[:2]:
            raise ConfigError("attention mask shape must match N x T")
        if len(self.ids) != self.values.shape[0]:
            raise ConfigError("one id per document required")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("token embeddings contain non-finite values")


@dataclass
class EmbeddingMatrix:
    """N document embeddings with aligned article ids."""

    ids: list[str]
    values: np.ndarray  # N x D
    encoder_name: str = ""
    activated: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ConfigError("embedding matrix must be N x D")
        if len(self.ids) != self.values.shape[0]:
            raise ConfigError("id count does not match row count")
        if len(set(self.ids)) != len(self.ids):
            raise ConfigError("duplicate ids in embedding matrix")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("embedding matrix contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row(self, article_id: str) -> np.ndarray:
        return self.values[self.ids.index(article_id)]


@dataclass
class PooledEmbedding:
    """A single document vector tied to its source article."""

    vector: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.vector)):
            raise ConfigError("pooled embedding contains non-finite values")


def pool_and_activate(
    batch: TokenEmbeddingBatch, strategy: str = "first_token",
    encoder_name: str = "",
) -> EmbeddingMatrix:
    """Pool token embeddings per document, then apply elementwise tanh.

    first_token takes position 0's vector; mean averages over masked
    positions. The output is marked activated.
    """
    if strategy not in ("first_token", "mean"):
        raise ConfigError(f"unknown pooling strategy: {strategy}")
    if not batch.attention_mask.any(axis=1).all():
        bad = int(np.argmin(batch.attention_mask.any(axis=1)))
        raise ConfigError(f"document {batch.ids[bad]!r} has zero masked positions")
    if strategy == "first_token":
        pooled = batch.values[:, 0, :]
    else:
        mask = batch.attention_mask.astype(np.float64)
        pooled = (batch.values * mask[:, :, None]).sum(axis=1) / mask.sum(axis=1)[:, None]
    return EmbeddingMatrix(
        ids=list(batch.ids),
        values=np.tanh(pooled),
        encoder_name=encoder_name,
        activated=True,
    )


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write the binary interchange format (32-bit values)."""
    Path(path).write_bytes(embeddings_to_bytes(matrix))


def embeddings_to_bytes(matrix: EmbeddingMatrix) -> bytes:
    name = matrix.encoder_name.encode("utf-8")
    parts = [
        EMB_MAGIC,
        struct.pack("<H", EMB_VERSION),
        struct.pack("<I", matrix.dim),
        struct.pack("<I", matrix.n),
        struct.pack("<H", len(name)),
        name,
        struct.pack("<B", 1 if matrix.activated else 0),
    ]
    values32 = matrix.values.astype(np.float32)
    for i, article_id in enumerate(matrix.ids):
        rid = article_id.encode("utf-8")
        parts.append(struct.pack("<H", len(rid)))
        parts.append(rid)
        parts.append(values32[i].tobytes())
    return b"".join(parts)


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read either the binary interchange format or its JSONL variant.

    Raises FormatError naming the offending row on NaN values, duplicate
    ids, dimension mismatches, truncation, or a bad magic/version.
    """
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == EMB_MAGIC:
        return embeddings_from_bytes(path.read_bytes(), str(path))
    return _read_embeddings_jsonl(path)


def embeddings_from_bytes(data: bytes, source: str = "<bytes>") -> EmbeddingMatrix:
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"embedding file {source} truncated at byte {off}")
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(4) != EMB_MAGIC:
        raise FormatError(f"bad magic in embedding file {source}")
    (version,) = struct.unpack("<H", take(2))
    if version != EMB_VERSION:
        raise FormatError(
            f"unsupported embedding format version {version} in {source}"
        )
    (dim,) = struct.unpack("<I", take(4))
    (n,) = struct.unpack("<I", take(4))
    (name_len,) = struct.unpack("<H", take(2))
    encoder_name = take(name_len).decode("utf-8")
    (activated,) = struct.unpack("<B", take(1))

    ids: list[str] = []
    seen: set[str] = set()
    values = np.empty((n, dim), dtype=np.float32)
    for i in range(n):
        (id_len,) = struct.unpack("<H", take(2))
        rid = take(id_len).decode("utf-8")
        if rid in seen:
            raise FormatError(f"duplicate id {rid!r} at record {i} in {source}")
        seen.add(rid)
        row = np.frombuffer(take(dim * 4), dtype="<f4")
        if not np.all(np.isfinite(row)):
            raise FormatError(f"non-finite value at record {i} (id {rid!r}) in {source}")
        ids.append(rid)
        values[i] = row
    if off != len(data):
        raise FormatError(f"trailing bytes after record {n - 1} in {source}")
    return EmbeddingMatrix(
        ids=ids, values=values.astype(np.float64),
        encoder_name=encoder_name, activated=bool(activated),
    )


def _read_embeddings_jsonl(path: Path) -> EmbeddingMatrix:
    try:
        lines = path.read_text("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise FormatError(f"bad magic in embedding file {path}") from exc
    if not lines:
        raise FormatError(f"empty embedding file {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad magic in embedding file {path}") from exc
    if not isinstance(header, dict) or header.get("format") != "emb-jsonl":
        raise FormatError(f"bad magic in embedding file {path}")
    if header.get("version") != EMB_VERSION:
        raise FormatError(f"unsupported embedding format version in {path}")
    dim = int(header["dim"])
    ids: list[str] = []
    seen: set[str] = set()
    rows: list[np.ndarray] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed row at line {lineno} in {path}") from exc
        rid = str(obj["id"])
        vec = np.asarray(obj["vector"], dtype=np.float32)
        if vec.shape != (dim,):
            raise FormatError(
                f"dimension mismatch at line {lineno} (id {rid!r}) in {path}: "
                f"got {vec.shape[0]}, expected {dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"non-finite value at line {lineno} (id {rid!r}) in {path}")
        if rid in seen:
            raise FormatError(f"duplicate id {rid!r} at line {lineno} in {path}")
        seen.add(rid)
        ids.append(rid)
        rows.append(vec)
    if not rows:
        raise FormatError(f"no embedding rows in {path}")
    return EmbeddingMatrix(
        ids=ids,
        values=np.stack(rows).astype(np.float64),
        encoder_name=str(header.get("encoder", "")),
        activated=bool(header.get("activated", False)),
    )


def partition_by_topic(matrix: EmbeddingMatrix, labels: dict[str, int], K: int):
    """Split an embedding matrix into per-topic partitions.

    Every id must carry a label in 0..K-1. Empty partitions are permitted;
    callers should warn on them. Returns a recommender TopicIndex.
    """
    from .recommend import TopicIndex

    for article_id in matrix.ids:
        if article_id not in labels:
            raise ConfigError(f"article {article_id!r} has no topic label")
        if not 0 <= labels[article_id] < K:
            raise ConfigError(
                f"label {labels[article_id]} for {article_id!r} out of range 0..{K - 1}"
            )
    partitions = []
    for k in range(K):
        idx = [i for i, rid in enumerate(matrix.ids) if labels[rid] == k]
        partitions.append(
            EmbeddingMatrix(
                ids=[matrix.ids[i] for i in idx],
                values=matrix.values[idx] if idx else np.empty((0, matrix.dim)),
                encoder_name=matrix.encoder_name,
                activated=matrix.activated,
            )
        )
    return TopicIndex(partitions=partitions)
