"""LDA topic model fit by collapsed Gibbs sampling.

The sampler resamples each token's topic from the full conditional
p(z=k) ~ (n_dk + alpha) * (n_kw + beta) / (n_k + V*beta), with the token
being resampled excluded from all counts. Runs are fully reproducible
given a seed: uniforms are drawn from a seeded numpy Generator and the
sweep itself is a deterministic compiled kernel.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError, FormatError, UnclassifiableDocumentError
from .textproc import BowDocument, Vocabulary

MODEL_MAGIC = b"LDA1"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LdaConfig:
    K: int = 5
    alpha: float = 0.1
    beta: float = 0.01
    iterations: int = 1000
    burn_in: int = 200
    seed: int = 0
    # Average theta/phi over post-burn-in sweeps instead of taking the
    # final state. Off by default: the point estimate is the contract.
    average_after_burn_in: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("alpha and beta must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not (0 <= self.burn_in < self.iterations):
            raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")


@dataclass
class TopicModelState:
    """Fitted sampler state: assignments, count tables, theta/phi estimates.

    token_doc/token_word give each token's document and word index, so the
    count tables are exactly recomputable from z.
    """

    config: LdaConfig
    vocab_hash: str
    doc_ids: list[str]
    token_doc: np.ndarray  # int32, per token
    token_word: np.ndarray  # int32, per token
    z: np.ndarray  # int32, per token
    n_dk: np.ndarray  # int64, D x K
    n_kw: np.ndarray  # int64, K x V
    n_k: np.ndarray  # int64, K
    theta: np.ndarray  # float64, D x K
    phi: np.ndarray  # float64, K x V

    @property
    def K(self) -> int:
        return self.n_k.shape[0]

    @property
    def V(self) -> int:
        return self.n_kw.shape[1]


def vocab_fingerprint(vocab: Vocabulary) -> str:
    """Stable hash over the vocabulary's token->index mapping."""
    h = hashlib.sha256()
    for tok, idx in sorted(vocab.token_to_index.items(), key=lambda kv: kv[1]):
        h.update(f"{idx}\t{tok}\n".encode("utf-8"))
    return h.hexdigest()


@njit(cache=True)
def _gibbs_sweep(token_doc, token_word, z, n_dk, n_kw, n_k, alpha, beta, uniforms):
    K = n_k.shape[0]
    V = n_kw.shape[1]
    cum = np.empty(K, dtype=np.float64)
    for i in range(token_doc.shape[0]):
        d = token_doc[i]
        w = token_word[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for t in range(K):
            total += (n_dk[d, t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + V * beta)
            cum[t] = total
        u = uniforms[i] * total
        k_new = K - 1
        for t in range(K):
            if u < cum[t]:
                k_new = t
                break
        z[i] = k_new
        n_dk[d, k_new] += 1
        n_kw[k_new, w] += 1
        n_k[k_new] += 1


@njit(cache=True)
def _foldin_sweep(words, z, n_dk_local, n_kw, n_k, alpha, beta, uniforms):
    # Holds the topic-word counts fixed; only the local doc-topic counts move.
    K = n_k.shape[0]
    V = n_kw.shape[1]
    cum = np.empty(K, dtype=np.float64)
    for i in range(words.shape[0]):
        w = words[i]
        k = z[i]
        n_dk_local[k] -= 1
        total = 0.0
        for t in range(K):
            total += (n_dk_local[t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + V * beta)
            cum[t] = total
        u = uniforms[i] * total
        k_new = K - 1
        for t in range(K):
            if u < cum[t]:
                k_new = t
                break
        z[i] = k_new
        n_dk_local[k_new] += 1


def _expand_tokens(docs: list[BowDocument]) -> tuple[np.ndarray, np.ndarray]:
    token_doc: list[int] = []
    token_word: list[int] = []
    for d, doc in enumerate(docs):
        for w in sorted(doc.counts):
            c = doc.counts[w]
            token_doc.extend([d] * c)
            token_word.extend([w] * c)
    return (
        np.asarray(token_doc, dtype=np.int32),
        np.asarray(token_word, dtype=np.int32),
    )


def _estimate(n_dk, n_kw, n_k, alpha, beta):
    K = n_k.shape[0]
    V = n_kw.shape[1]
    n_d = n_dk.sum(axis=1, keepdims=True)
    theta = (n_dk + alpha) / (n_d + K * alpha)
    phi = (n_kw + beta) / (n_k[:, None] + V * beta)
    return theta, phi


def fit_lda(
    docs: list[BowDocument], vocab: Vocabulary, config: LdaConfig
) -> TopicModelState:
    """Fit the topic model by collapsed Gibbs sampling.

    theta and phi come from the final post-burn-in state unless
    config.average_after_burn_in is set.
    """
    if not docs:
        raise ConfigError("cannot fit LDA on an empty document list")
    for doc in docs:
        if not doc.counts:
            raise ConfigError(f"document {doc.doc_id!r} is empty")
    V = len(vocab)
    if V < 2:
        raise ConfigError("vocabulary must have at least 2 tokens")

    token_doc, token_word = _expand_tokens(docs)
    n_tokens = token_doc.shape[0]
    if config.K > n_tokens:
        raise ConfigError(
            f"K={config.K} exceeds the total token count {n_tokens}"
        )
    if token_word.max() >= V:
        raise ConfigError("document references a token index outside the vocabulary")

    D = len(docs)
    K = config.K
    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, K, size=n_tokens, dtype=np.int32)

    n_dk = np.zeros((D, K), dtype=np.int64)
    n_kw = np.zeros((K, V), dtype=np.int64)
    n_k = np.zeros(K, dtype=np.int64)
    np.add.at(n_dk, (token_doc, z), 1)
    np.add.at(n_kw, (z, token_word), 1)
    np.add.at(n_k, z, 1)

    theta_acc = np.zeros((D, K)) if config.average_after_burn_in else None
    phi_acc = np.zeros((K, V)) if config.average_after_burn_in else None
    n_averaged = 0

    for sweep in range(config.iterations):
        uniforms = rng.random(n_tokens)
        _gibbs_sweep(
            token_doc, token_word, z, n_dk, n_kw, n_k,
            config.alpha, config.beta, uniforms,
        )
        if config.average_after_burn_in and sweep >= config.burn_in:
            t, p = _estimate(n_dk, n_kw, n_k, config.alpha, config.beta)
            theta_acc += t
            phi_acc += p
            n_averaged += 1

    if config.average_after_burn_in:
        theta = theta_acc / n_averaged
        phi = phi_acc / n_averaged
    else:
        theta, phi = _estimate(n_dk, n_kw, n_k, config.alpha, config.beta)

    return TopicModelState(
        config=config,
        vocab_hash=vocab_fingerprint(vocab),
        doc_ids=[doc.doc_id for doc in docs],
        token_doc=token_doc,
        token_word=token_word,
        z=z,
        n_dk=n_dk,
        n_kw=n_kw,
        n_k=n_k,
        theta=theta,
        phi=phi,
    )


def infer_theta(
    doc: BowDocument, model: TopicModelState, config: LdaConfig | None = None
) -> np.ndarray:
    """Fold-in inference for one document against a fitted model.

    Gibbs-samples the document's topic assignments with the fitted
    topic-word counts held fixed, then applies the usual theta estimator.
    """
    config = config or model.config
    in_vocab = {w: c for w, c in doc.counts.items() if 0 <= w < model.V}
    if not in_vocab:
        raise UnclassifiableDocumentError(
            f"document {doc.doc_id!r} has no in-vocabulary tokens"
        )
    words: list[int] = []
    for w in sorted(in_vocab):
        words.extend([w] * in_vocab[w])
    words_arr = np.asarray(words, dtype=np.int32)

    K = model.K
    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, K, size=words_arr.shape[0], dtype=np.int32)
    n_dk_local = np.bincount(z, minlength=K).astype(np.int64)

    for _ in range(config.iterations):
        uniforms = rng.random(words_arr.shape[0])
        _foldin_sweep(
            words_arr, z, n_dk_local, model.n_kw, model.n_k,
            config.alpha, config.beta, uniforms,
        )

    n_d = n_dk_local.sum()
    return (n_dk_local + config.alpha) / (n_d + K * config.alpha)


def assign_topic(theta: np.ndarray) -> int:
    """Index of the highest-scoring topic; ties go to the lowest index."""
    return int(np.argmax(theta))


def top_words(model: TopicModelState, topic: int, n: int, vocab: Vocabulary) -> list[str]:
    """The n highest-probability tokens for a topic, for human inspection.

    Descending by probability, ties broken by token text ascending;
    n is clamped to the vocabulary size.
    """
    if not 0 <= topic < model.K:
        raise ConfigError(f"topic index {topic} out of range for K={model.K}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    tokens = vocab.index_to_token
    row = model.phi[topic]
    order = sorted(range(len(tokens)), key=lambda w: (-row[w], tokens[w]))
    return [tokens[w] for w in order[: min(n, len(tokens))]]


def recompute_counts(model: TopicModelState):
    """Rebuild n_dk, n_kw, n_k from z (count-consistency check support)."""
    D = model.n_dk.shape[0]
    n_dk = np.zeros((D, model.K), dtype=np.int64)
    n_kw = np.zeros((model.K, model.V), dtype=np.int64)
    n_k = np.zeros(model.K, dtype=np.int64)
    np.add.at(n_dk, (model.token_doc, model.z), 1)
    np.add.at(n_kw, (model.z, model.token_word), 1)
    np.add.at(n_k, model.z, 1)
    return n_dk, n_kw, n_k


def _write_array(fh, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr).tobytes()
    fh.write(struct.pack("<Q", len(data)))
    fh.write(data)


def _read_array(fh, dtype, shape) -> np.ndarray:
    (nbytes,) = struct.unpack("<Q", fh.read(8))
    data = fh.read(nbytes)
    if len(data) != nbytes:
        raise FormatError("model file truncated")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def save_model(model: TopicModelState, path: str | Path) -> None:
    """Persist the fitted model to a single versioned binary file."""
    header = {
        "config": {
            "K": model.config.K,
            "alpha": model.config.alpha,
            "beta": model.config.beta,
            "iterations": model.config.iterations,
            "burn_in": model.config.burn_in,
            "seed": model.config.seed,
            "average_after_burn_in": model.config.average_after_burn_in,
        },
        "vocab_hash": model.vocab_hash,
        "doc_ids": model.doc_ids,
        "n_tokens": int(model.z.shape[0]),
        "D": int(model.n_dk.shape[0]),
        "K": int(model.K),
        "V": int(model.V),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", MODEL_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for arr in (model.token_doc, model.token_word, model.z,
                    model.n_dk, model.n_kw, model.n_k, model.theta, model.phi):
            _write_array(fh, arr)


def load_model(path: str | Path) -> TopicModelState:
    """Load a model file written by save_model."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise FormatError(f"bad magic in model file {path}: {magic!r}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != MODEL_VERSION:
            raise FormatError(
                f"unsupported model version {version} (expected {MODEL_VERSION})"
            )
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = LdaConfig(**header["config"])
        n, D, K, V = header["n_tokens"], header["D"], header["K"], header["V"]
        return TopicModelState(
            config=cfg,
            vocab_hash=header["vocab_hash"],
            doc_ids=list(header["doc_ids"]),
            token_doc=_read_array(fh, np.int32, (n,)),
            token_word=_read_array(fh, np.int32, (n,)),
            z=_read_array(fh, np.int32, (n,)),
            n_dk=_read_array(fh, np.int64, (D, K)),
            n_kw=_read_array(fh, np.int64, (K, V)),
            n_k=_read_array(fh, np.int64, (K,)),
            theta=_read_array(fh, np.float64, (D, K)),
            phi=_read_array(fh, np.float64, (K, V)),
        )
