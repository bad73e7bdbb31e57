"""Exact L1 nearest-neighbor recommendation within a topic partition.

The candidate set is small (paper scale: 180 ELSI articles), so the
contract is brute-force equivalence: an exact scan sorted by
(distance, id) with no approximation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ClassifierHead, predict_topic
from .embeddings import (
    EmbeddingMatrix,
    PooledEmbedding,
    embeddings_from_bytes,
    embeddings_to_bytes,
)
from .errors import ConfigError, EmptyPartitionError, FormatError

INDEX_MAGIC = b"IDX1"
INDEX_VERSION = 1


@dataclass
class TopicIndex:
    """Per-topic ELSI embedding partitions sharing one dimension."""

    partitions: list[EmbeddingMatrix]

    def __post_init__(self):
        if not self.partitions:
            raise ConfigError("topic index needs at least one partition")
        dims = {p.dim for p in self.partitions if p.n > 0}
        if len(dims) > 1:
            raise ConfigError(f"inconsistent embedding dimensions: {sorted(dims)}")
        all_ids: list[str] = [rid for p in self.partitions for rid in p.ids]
        if len(set(all_ids)) != len(all_ids):
            raise ConfigError("partitions are not disjoint by id")

    @property
    def K(self) -> int:
        return len(self.partitions)

    @property
    def dim(self) -> int:
        for p in self.partitions:
            if p.n > 0:
                return p.dim
        raise ConfigError("all partitions are empty")

    @property
    def total(self) -> int:
        return sum(p.n for p in self.partitions)

    def empty_topics(self) -> list[int]:
        return [k for k, p in enumerate(self.partitions) if p.n == 0]


@dataclass
class Recommendation:
    article_id: str
    distance: float
    topic: int
    rank: int  # 1-based


def l1_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of absolute componentwise differences (Manhattan distance)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def recommend(
    query: PooledEmbedding | np.ndarray,
    topic: int,
    k: int,
    index: TopicIndex,
) -> list[Recommendation]:
    """Exact scan of the topic's partition, ascending (distance, id).

    Returns min(k, partition size) items. Raises EmptyPartitionError when
    the topic has no candidates.
    """
    if not 0 <= topic < index.K:
        raise ConfigError(f"topic {topic} out of range for K={index.K}")
    if k < 1:
        raise ConfigError("k must be >= 1")
    vec = query.vector if isinstance(query, PooledEmbedding) else np.asarray(query, float)
    partition = index.partitions[topic]
    if partition.n == 0:
        raise EmptyPartitionError(topic)
    if vec.shape != (partition.dim,):
        raise ConfigError(
            f"query dimension {vec.shape} does not match index D={partition.dim}"
        )
    distances = np.abs(partition.values - vec).sum(axis=1)
    order = sorted(range(partition.n), key=lambda i: (distances[i], partition.ids[i]))
    return [
        Recommendation(
            article_id=partition.ids[i],
            distance=float(distances[i]),
            topic=topic,
            rank=rank,
        )
        for rank, i in enumerate(order[: min(k, partition.n)], start=1)
    ]


def recommend_for_abstract(
    query: PooledEmbedding | np.ndarray,
    head: ClassifierHead,
    index: TopicIndex,
    k: int = 1,
) -> tuple[int, np.ndarray, list[Recommendation]]:
    """Predict the query's topic, then recommend within that partition.

    Returns (topic, topic probabilities, recommendations).
    """
    if head.K != index.K:
        raise ConfigError(
            f"head has K={head.K} but index has {index.K} partitions"
        )
    topic, probs = predict_topic(query, head)
    try:
        results = recommend(query, topic, k, index)
    except EmptyPartitionError as exc:
        raise EmptyPartitionError(
            topic,
            f"predicted topic {topic} (probability {probs[topic]:.4f}) "
            f"has no candidate articles",
        ) from exc
    return topic, probs, results


def recommend_global(
    query: PooledEmbedding | np.ndarray, k: int, index: TopicIndex
) -> list[Recommendation]:
    """Fallback scan across all partitions; results keep their own topic."""
    vec = query.vector if isinstance(query, PooledEmbedding) else np.asarray(query, float)
    pool: list[tuple[float, str, int]] = []
    for t, partition in enumerate(index.partitions):
        if partition.n == 0:
            continue
        distances = np.abs(partition.values - vec).sum(axis=1)
        pool.extend((float(distances[i]), partition.ids[i], t) for i in range(partition.n))
    if not pool:
        raise EmptyPartitionError(-1, "topic index is entirely empty")
    pool.sort(key=lambda x: (x[0], x[1]))
    return [
        Recommendation(article_id=rid, distance=dist, topic=t, rank=rank)
        for rank, (dist, rid, t) in enumerate(pool[:k], start=1)
    ]


def recommendation_json(topic: int, probs: np.ndarray, results: list[Recommendation]) -> str:
    """Serialize a recommendation response to the output JSON schema."""
    return json.dumps(
        {
            "topic": topic,
            "topic_probability": float(probs[topic]),
            "results": [
                {"id": r.article_id, "distance": r.distance, "rank": r.rank}
                for r in results
            ],
        },
        sort_keys=True,
    )


def save_index(index: TopicIndex, path: str | Path) -> None:
    """Persist the index: one embedded interchange payload per partition."""
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<H", INDEX_VERSION))
        fh.write(struct.pack("<I", index.K))
        for partition in index.partitions:
            payload = embeddings_to_bytes(partition)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_index(path: str | Path) -> TopicIndex:
    data = Path(path).read_bytes()
    if data[:4] != INDEX_MAGIC:
        raise FormatError(f"bad magic in index file {path}")
    (version,) = struct.unpack("<H", data[4:6])
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version} in {path}")
    (K,) = struct.unpack("<I", data[6:10])
    off = 10
    partitions = []
    for _ in range(K):
        if off + 8 > len(data):
            raise FormatError(f"index file {path} truncated")
        (plen,) = struct.unpack("<Q", data[off : off + 8])
        off += 8
        if off + plen > len(data):
            raise FormatError(f"index file {path} truncated")
        partitions.append(embeddings_from_bytes(data[off : off + plen], str(path)))
        off += plen
    if off != len(data):
        raise FormatError(f"trailing bytes in index file {path}")
    return TopicIndex(partitions=partitions)
