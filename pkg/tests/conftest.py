from pathlib import Path

import numpy as np
import pytest

from elsirec.textproc import BowDocument, Vocabulary

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def make_planted_corpus(n_docs=200, words_per_topic=50, doc_len=40, seed=1234):
    """Synthetic 2-topic corpus with disjoint vocabularies.

    Returns (docs, vocab, planted_labels); the planted labels are the
    recovery oracle.
    """
    rng = np.random.default_rng(seed)
    tokens = [f"t{t}w{w:02d}" for t in range(2) for w in range(words_per_topic)]
    ordered = sorted(tokens)
    vocab = Vocabulary(
        token_to_index={tok: i for i, tok in enumerate(ordered)},
        doc_frequency={tok: 1 for tok in ordered},
    )
    docs = []
    labels = []
    for d in range(n_docs):
        topic = d % 2
        words = rng.integers(0, words_per_topic, size=doc_len)
        counts: dict[int, int] = {}
        for w in words:
            idx = vocab.token_to_index[f"t{topic}w{w:02d}"]
            counts[idx] = counts.get(idx, 0) + 1
        docs.append(BowDocument(doc_id=f"doc{d}", counts=counts))
        labels.append(topic)
    return docs, vocab, labels


def purity(assigned, planted) -> float:
    """Best label agreement over the two possible topic permutations."""
    assigned = np.asarray(assigned)
    planted = np.asarray(planted)
    direct = float(np.mean(assigned == planted))
    flipped = float(np.mean((1 - assigned) == planted))
    return max(direct, flipped)


@pytest.fixture(scope="session")
def planted_corpus():
    return make_planted_corpus()


def make_cluster_fixture(n_classes=5, dim=32, per_class=100, sep=10.0, seed=99):
    """Well-separated Gaussian clusters for classifier training tests.

    Centers are mutually >= sep * noise-sigma apart (sigma = 1).
    """
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_classes, dim))
    for k in range(n_classes):
        centers[k, k] = sep
    X = np.concatenate(
        [centers[k] + rng.standard_normal((per_class, dim)) for k in range(n_classes)]
    )
    y = np.repeat(np.arange(n_classes), per_class)
    ids = [f"p{i}" for i in range(len(y))]
    return ids, X, y


def run_pipeline(out_dir, fixtures_dir, lda_iterations=1000, lda_seed=42,
                 train_seed=7, k_results=3):
    """Drive the full seeded CLI pipeline into out_dir; returns the
    recommend subcommand's parsed JSON output."""
    import json

    from click.testing import CliRunner

    from elsirec.cli import main as cli_main

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = CliRunner()

    def run(args):
        result = runner.invoke(cli_main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result.output

    corpus = str(fixtures_dir / "mini_corpus.jsonl")
    emb = str(fixtures_dir / "mini_embeddings.emb")
    query = str(fixtures_dir / "query.emb")
    run(["ingest", "--corpus", corpus, "--out", str(out)])
    run(["lda-fit", "--corpus", str(out / "sb.jsonl"), "--k", "2",
         "--iterations", str(lda_iterations), "--burn-in",
         str(lda_iterations // 5), "--seed", str(lda_seed),
         "--out", str(out / "model.lda"), "--vocab-out", str(out / "vocab.tsv")])
    run(["label", "--corpus", str(out / "sb.jsonl"), "--model",
         str(out / "model.lda"), "--vocab", str(out / "vocab.tsv"),
         "--out", str(out / "labels.jsonl")])
    run(["train-head", "--embeddings", emb, "--labels", str(out / "labels.jsonl"),
         "--learning-rate", "0.05", "--epochs", "300", "--batch-size", "10",
         "--seed", str(train_seed), "--out", str(out / "head.bin")])
    run(["build-index", "--embeddings", emb, "--ids", str(out / "elsi.jsonl"),
         "--head", str(out / "head.bin"), "--out", str(out / "index.bin")])
    output = run(["recommend", "--query-embedding", query, "--head",
                  str(out / "head.bin"), "--index", str(out / "index.bin"),
                  "--k", str(k_results)])
    return json.loads(output.strip().splitlines()[-1])
