"""Softmax topic classifier over document embeddings, trained with Adam.

Stands in for transformer fine-tuning: a K x D linear head minimizing mean
cross-entropy. Also houses the evaluation metrics (confusion matrix,
accuracy, macro F1).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingMatrix, PooledEmbedding
from .errors import ConfigError, FormatError

HEAD_MAGIC = b"HEAD"
HEAD_VERSION = 1


@dataclass
class ClassifierHead:
    W: np.ndarray  # K x D
    b: np.ndarray  # K

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ConfigError("head shapes must be W: K x D, b: K")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ConfigError("head contains non-finite values")

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.00002
    epochs: int = 10
    batch_size: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")


@dataclass
class EvalReport:
    confusion: np.ndarray  # K x K, rows = true, columns = predicted
    accuracy: float
    macro_f1: float
    per_class: list[dict[str, float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "confusion": self.confusion.tolist(),
                "accuracy": self.accuracy,
                "macro_f1": self.macro_f1,
                "per_class": self.per_class,
            },
            sort_keys=True,
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(X: np.ndarray, y: np.ndarray, head: ClassifierHead) -> float:
    """Mean cross-entropy of softmax(W.x + b) over a batch."""
    probs = softmax(X @ head.W.T + head.b)
    return float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300)))


def gradient(
    X: np.ndarray, y: np.ndarray, head: ClassifierHead
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of mean cross-entropy w.r.t. W and b."""
    n = X.shape[0]
    probs = softmax(X @ head.W.T + head.b)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    dW = delta.T @ X / n
    db = delta.mean(axis=0)
    return dW, db


def train(
    embeddings: EmbeddingMatrix,
    labels: dict[str, int],
    config: TrainConfig,
) -> tuple[ClassifierHead, list[float]]:
    """Train the head with Adam (bias-corrected moments), zero init.

    Deterministic given the seed: the per-epoch shuffle order is the only
    source of randomness. Returns the head and the full-dataset mean
    cross-entropy recorded after each epoch.
    """
    for rid in embeddings.ids:
        if rid not in labels:
            raise ConfigError(f"article {rid!r} has no training label")
    y = np.asarray([labels[rid] for rid in embeddings.ids], dtype=np.int64)
    X = embeddings.values
    K = int(y.max()) + 1
    if K < 2:
        raise ConfigError("training requires at least 2 classes")

    D = X.shape[1]
    W = np.zeros((K, D))
    b = np.zeros(K)
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)

    rng = np.random.default_rng(config.seed)
    n = X.shape[0]
    t = 0
    loss_history: list[float] = []
    beta1, beta2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon

    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            head = ClassifierHead(W=W, b=b)
            dW, db = gradient(X[idx], y[idx], head)
            t += 1
            mW = beta1 * mW + (1 - beta1) * dW
            vW = beta2 * vW + (1 - beta2) * dW**2
            mb = beta1 * mb + (1 - beta1) * db
            vb = beta2 * vb + (1 - beta2) * db**2
            mW_hat = mW / (1 - beta1**t)
            vW_hat = vW / (1 - beta2**t)
            mb_hat = mb / (1 - beta1**t)
            vb_hat = vb / (1 - beta2**t)
            W = W - config.learning_rate * mW_hat / (np.sqrt(vW_hat) + eps)
            b = b - config.learning_rate * mb_hat / (np.sqrt(vb_hat) + eps)
        epoch_loss = cross_entropy(X, y, ClassifierHead(W=W, b=b))
        if not np.isfinite(epoch_loss):
            raise ConfigError("training diverged: non-finite loss")
        loss_history.append(epoch_loss)

    return ClassifierHead(W=W, b=b), loss_history


def predict_topic(
    x: PooledEmbedding | np.ndarray, head: ClassifierHead
) -> tuple[int, np.ndarray]:
    """Predicted topic (argmax, lowest-index tie-break) plus probabilities."""
    vec = x.vector if isinstance(x, PooledEmbedding) else np.asarray(x, dtype=np.float64)
    if vec.shape != (head.dim,):
        raise ConfigError(
            f"embedding dimension {vec.shape} does not match head D={head.dim}"
        )
    probs = softmax(head.W @ vec + head.b)
    return int(np.argmax(probs)), probs


def evaluate(y_true, y_pred, K: int) -> EvalReport:
    """Confusion matrix, accuracy, per-class P/R/F1, macro F1.

    Any 0/0 ratio is defined as 0. Macro F1 averages over all K classes,
    including classes absent from both label sets.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ConfigError("y_true and y_pred must have equal nonzero length")
    if y_true.min() < 0 or y_true.max() >= K or y_pred.min() < 0 or y_pred.max() >= K:
        raise ConfigError(f"labels must lie in 0..{K - 1}")

    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)

    per_class = []
    f1s = []
    for k in range(K):
        tp = confusion[k, k]
        fp = confusion[:, k].sum() - tp
        fn = confusion[k, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class.append(
            {"precision": float(precision), "recall": float(recall), "f1": float(f1)}
        )
        f1s.append(f1)

    return EvalReport(
        confusion=confusion,
        accuracy=float(np.trace(confusion) / confusion.sum()),
        macro_f1=float(np.mean(f1s)),
        per_class=per_class,
    )


def save_head(head: ClassifierHead, path: str | Path) -> None:
    """Persist the head: magic, version, K, D, then row-major W and b."""
    with open(path, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(struct.pack("<H", HEAD_VERSION))
        fh.write(struct.pack("<I", head.K))
        fh.write(struct.pack("<I", head.dim))
        fh.write(np.ascontiguousarray(head.W).tobytes())
        fh.write(head.b.tobytes())


def load_head(path: str | Path) -> ClassifierHead:
    data = Path(path).read_bytes()
    if data[:4] != HEAD_MAGIC:
        raise FormatError(f"bad magic in head file {path}")
    (version,) = struct.unpack("<H", data[4:6])
    if version != HEAD_VERSION:
        raise FormatError(f"unsupported head version {version} in {path}")
    K, D = struct.unpack("<II", data[6:14])
    expected = 14 + 8 * (K * D + K)
    if len(data) != expected:
        raise FormatError(f"head file {path} truncated or oversized")
    W = np.frombuffer(data[14 : 14 + 8 * K * D], dtype="<f8").reshape(K, D).copy()
    b = np.frombuffer(data[14 + 8 * K * D :], dtype="<f8").copy()
    return ClassifierHead(W=W, b=b)
