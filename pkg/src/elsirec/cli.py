"""Command-line pipeline: ingest -> lda-fit -> label -> train-head ->
build-index -> recommend -> evaluate -> serve.

Every subcommand prints one machine-readable JSON summary line to stdout;
logs go to stderr. Artifacts are plain files with no timestamps, so a
seeded pipeline is byte-for-byte reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import classifier as clf
from . import corpus as corpus_mod
from . import embeddings as emb
from . import lda as lda_mod
from . import recommend as rec
from . import textproc
from .errors import ElsirecError, EmptyPartitionError, UnclassifiableDocumentError

log = logging.getLogger("elsirec")


def _setup_logging(verbose: bool):
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _summary(command: str, **fields):
    click.echo(json.dumps({"command": command, **fields}, sort_keys=True))


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if p.suffix == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(p.read_text("utf-8"))
    return json.loads(p.read_text("utf-8"))


def _env_or(config: dict, key: str, flag_value, env_prefix="ELSIREC_"):
    # Precedence: explicit flag > environment variable > config file.
    if flag_value is not None:
        return flag_value
    env = os.environ.get(env_prefix + key.upper())
    if env is not None:
        return env
    return config.get(key)


def _read_labels(path: str | Path) -> dict[str, int]:
    labels: dict[str, int] = {}
    for line in Path(path).read_text("utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        labels[str(obj["id"])] = int(obj["topic"])
    return labels


@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging to stderr.")
def main(verbose):
    """Topic-conditioned ELSI article recommender pipeline."""
    _setup_logging(verbose)


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--format", "fmt", default="jsonl", type=click.Choice(["jsonl", "csv"]))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--elsi-term", "elsi_terms", multiple=True,
              help="Override the default ELSI query terms (repeatable).")
def ingest(corpus_path, fmt, out_dir, elsi_terms):
    """Parse a corpus file and partition it into SB and ELSI subsets."""
    try:
        report = corpus_mod.parse_corpus(corpus_path, fmt)
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    for row_no, reason in report.malformed_rows:
        log.warning("row %d malformed: %s", row_no, reason)
    for row_no in report.skipped_empty_abstract:
        log.warning("row %d skipped: empty abstract", row_no)
    for row_no, rid in report.duplicate_ids:
        log.warning("row %d duplicate id %s: keeping first occurrence", row_no, rid)

    query = (
        corpus_mod.QuerySpec(terms=tuple(elsi_terms))
        if elsi_terms
        else corpus_mod.QuerySpec.default_elsi()
    )
    sb_set, elsi_set = corpus_mod.partition_corpus(report.records, query)
    if not elsi_set:
        log.warning("no ELSI articles matched; recommendation will be impossible")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_partition_manifest(sb_set, out / "manifest.jsonl")
    corpus_mod.write_corpus_jsonl(sb_set, out / "sb.jsonl")
    corpus_mod.write_corpus_jsonl(elsi_set, out / "elsi.jsonl")
    _summary(
        "ingest",
        records=len(report.records),
        sb=len(sb_set),
        elsi=len(elsi_set),
        skipped=len(report.skipped_empty_abstract),
        duplicates=len(report.duplicate_ids),
        malformed=len(report.malformed_rows),
        out=str(out),
    )


def _tokenizer_config(stopwords_path, min_token_len, max_tokens) -> textproc.TokenizerConfig:
    stopwords = (
        textproc.load_stopwords(stopwords_path)
        if stopwords_path
        else textproc.load_default_stopwords()
    )
    return textproc.TokenizerConfig(
        min_token_len=min_token_len, stopwords=stopwords, max_tokens=max_tokens
    )


@main.command("lda-fit")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--k", default=5, show_default=True)
@click.option("--alpha", default=0.1, show_default=True)
@click.option("--beta", default=0.01, show_default=True)
@click.option("--iterations", default=1000, show_default=True)
@click.option("--burn-in", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--min-df", default=2, show_default=True)
@click.option("--max-df-fraction", default=0.95, show_default=True)
@click.option("--stopwords", "stopwords_path", type=click.Path(), default=None)
@click.option("--min-token-len", default=2, show_default=True)
@click.option("--max-tokens", default=512, show_default=True)
@click.option("--out", "model_out", required=True, type=click.Path())
@click.option("--vocab-out", required=True, type=click.Path())
def lda_fit(corpus_path, k, alpha, beta, iterations, burn_in, seed, min_df,
            max_df_fraction, stopwords_path, min_token_len, max_tokens,
            model_out, vocab_out):
    """Tokenize the corpus, build a vocabulary, and fit the topic model."""
    try:
        report = corpus_mod.parse_corpus(corpus_path)
        tok_config = _tokenizer_config(stopwords_path, min_token_len, max_tokens)
        token_lists = [
            textproc.tokenize(r.abstract_text, tok_config) for r in report.records
        ]
        vocab = textproc.build_vocabulary(token_lists, min_df, max_df_fraction)
        docs = []
        skipped = 0
        for record, tokens in zip(report.records, token_lists):
            bow = textproc.vectorize(tokens, vocab, doc_id=record.id)
            if bow is None:
                log.warning("document %s has no in-vocabulary tokens; excluded", record.id)
                skipped += 1
            else:
                docs.append(bow)
        config = lda_mod.LdaConfig(
            K=k, alpha=alpha, beta=beta, iterations=iterations,
            burn_in=burn_in, seed=seed,
        )
        model = lda_mod.fit_lda(docs, vocab, config)
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    vocab.dump(vocab_out)
    lda_mod.save_model(model, model_out)
    _summary(
        "lda-fit",
        documents=len(docs),
        excluded_empty=skipped,
        vocabulary=len(vocab),
        topics=k,
        model=str(model_out),
        vocab=str(vocab_out),
    )


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--vocab", "vocab_path", required=True, type=click.Path())
@click.option("--stopwords", "stopwords_path", type=click.Path(), default=None)
@click.option("--min-token-len", default=2, show_default=True)
@click.option("--max-tokens", default=512, show_default=True)
@click.option("--out", "labels_out", required=True, type=click.Path())
def label(corpus_path, model_path, vocab_path, stopwords_path, min_token_len,
          max_tokens, labels_out):
    """Assign each abstract its argmax topic from the fitted model.

    Training documents reuse their fitted theta; unseen documents are
    folded in against the fixed topic-word counts.
    """
    try:
        report = corpus_mod.parse_corpus(corpus_path)
        model = lda_mod.load_model(model_path)
        vocab = textproc.Vocabulary.load(vocab_path)
        if lda_mod.vocab_fingerprint(vocab) != model.vocab_hash:
            raise click.ClickException(
                f"vocabulary file {vocab_path} does not match the model's "
                f"vocabulary hash; refit or pass the original vocabulary"
            )
        tok_config = _tokenizer_config(stopwords_path, min_token_len, max_tokens)
        trained = {doc_id: i for i, doc_id in enumerate(model.doc_ids)}
        lines = []
        unclassifiable = 0
        for record in report.records:
            if record.id in trained:
                theta = model.theta[trained[record.id]]
            else:
                tokens = textproc.tokenize(record.abstract_text, tok_config)
                bow = textproc.vectorize(tokens, vocab, doc_id=record.id)
                if bow is None:
                    log.warning("document %s unclassifiable: no in-vocabulary tokens",
                                record.id)
                    unclassifiable += 1
                    continue
                try:
                    theta = lda_mod.infer_theta(bow, model)
                except UnclassifiableDocumentError:
                    unclassifiable += 1
                    continue
            lines.append(json.dumps(
                {"id": record.id, "topic": lda_mod.assign_topic(theta),
                 "theta": [round(float(x), 12) for x in theta]},
                sort_keys=True,
            ))
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    Path(labels_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _summary("label", labeled=len(lines), unclassifiable=unclassifiable,
             out=str(labels_out))


@main.command("train-head")
@click.option("--embeddings", "emb_path", required=True, type=click.Path())
@click.option("--labels", "labels_path", required=True, type=click.Path())
@click.option("--learning-rate", default=0.00002, show_default=True)
@click.option("--epochs", default=10, show_default=True)
@click.option("--batch-size", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--eval-split", default=0.0, show_default=True,
              help="Held-out fraction for an evaluation report (0 = none).")
@click.option("--out", "head_out", required=True, type=click.Path())
@click.option("--report-out", type=click.Path(), default=None)
def train_head(emb_path, labels_path, learning_rate, epochs, batch_size, seed,
               eval_split, head_out, report_out):
    """Train the softmax topic classifier head on document embeddings."""
    try:
        matrix = emb.read_embeddings(emb_path)
        labels = _read_labels(labels_path)
        config = clf.TrainConfig(
            learning_rate=learning_rate, epochs=epochs,
            batch_size=batch_size, seed=seed,
        )
        train_matrix, holdout = matrix, None
        if eval_split > 0:
            rng = np.random.default_rng(seed)
            n_hold = int(round(eval_split * matrix.n))
            hold_idx = set(rng.permutation(matrix.n)[:n_hold].tolist())
            keep = [i for i in range(matrix.n) if i not in hold_idx]
            hold = sorted(hold_idx)
            train_matrix = emb.EmbeddingMatrix(
                ids=[matrix.ids[i] for i in keep], values=matrix.values[keep],
                encoder_name=matrix.encoder_name, activated=matrix.activated,
            )
            holdout = emb.EmbeddingMatrix(
                ids=[matrix.ids[i] for i in hold], values=matrix.values[hold],
                encoder_name=matrix.encoder_name, activated=matrix.activated,
            ) if hold else None
        head, loss_history = clf.train(train_matrix, labels, config)
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    clf.save_head(head, head_out)
    fields = dict(
        examples=train_matrix.n, topics=head.K, epochs=epochs,
        final_loss=loss_history[-1], head=str(head_out),
    )
    if holdout is not None:
        y_true = [labels[rid] for rid in holdout.ids]
        y_pred = [clf.predict_topic(holdout.values[i], head)[0]
                  for i in range(holdout.n)]
        report = clf.evaluate(y_true, y_pred, head.K)
        fields.update(holdout=holdout.n, holdout_accuracy=report.accuracy,
                      holdout_macro_f1=report.macro_f1)
        if report_out:
            Path(report_out).write_text(report.to_json() + "\n", encoding="utf-8")
    _summary("train-head", **fields)


@main.command("build-index")
@click.option("--embeddings", "emb_path", required=True, type=click.Path())
@click.option("--head", "head_path", required=True, type=click.Path())
@click.option("--ids", "ids_path", type=click.Path(), default=None,
              help="JSONL file of records whose ids select the subset to index "
                   "(e.g. the ingest step's elsi.jsonl).")
@click.option("--out", "index_out", required=True, type=click.Path())
def build_index(emb_path, head_path, ids_path, index_out):
    """Partition ELSI embeddings by their predicted topic."""
    try:
        matrix = emb.read_embeddings(emb_path)
        if ids_path:
            wanted = {
                str(json.loads(line)["id"])
                for line in Path(ids_path).read_text("utf-8").splitlines()
                if line.strip()
            }
            keep = [i for i, rid in enumerate(matrix.ids) if rid in wanted]
            missing = wanted - set(matrix.ids)
            if missing:
                raise click.ClickException(
                    f"ids without embeddings: {sorted(missing)[:5]}"
                )
            matrix = emb.EmbeddingMatrix(
                ids=[matrix.ids[i] for i in keep], values=matrix.values[keep],
                encoder_name=matrix.encoder_name, activated=matrix.activated,
            )
        head = clf.load_head(head_path)
        predicted = {
            rid: clf.predict_topic(matrix.values[i], head)[0]
            for i, rid in enumerate(matrix.ids)
        }
        index = emb.partition_by_topic(matrix, predicted, head.K)
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    for topic in index.empty_topics():
        log.warning("topic %d has no ELSI articles", topic)
    rec.save_index(index, index_out)
    _summary(
        "build-index",
        articles=matrix.n,
        topics=index.K,
        partition_sizes=[p.n for p in index.partitions],
        index=str(index_out),
    )


@main.command()
@click.option("--query-embedding", "query_path", required=True, type=click.Path())
@click.option("--head", "head_path", required=True, type=click.Path())
@click.option("--index", "index_path", required=True, type=click.Path())
@click.option("--k", default=1, show_default=True)
@click.option("--fallback-global", is_flag=True,
              help="Search all partitions when the predicted topic is empty.")
def recommend(query_path, head_path, index_path, k, fallback_global):
    """Recommend ELSI articles for a query embedding."""
    try:
        query = emb.read_embeddings(query_path)
        head = clf.load_head(head_path)
        index = rec.load_index(index_path)
        vec = query.values[0]
        try:
            topic, probs, results = rec.recommend_for_abstract(vec, head, index, k)
            out_of_topic = False
        except EmptyPartitionError:
            if not fallback_global:
                raise
            topic, probs = clf.predict_topic(vec, head)
            results = rec.recommend_global(vec, k, index)
            out_of_topic = True
    except EmptyPartitionError as exc:
        raise click.ClickException(str(exc))
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    payload = {
        "topic": topic,
        "topic_probability": float(probs[topic]),
        "results": [
            {"id": r.article_id, "distance": r.distance, "rank": r.rank}
            for r in results
        ],
    }
    if out_of_topic:
        payload["out_of_topic_fallback"] = True
        payload["result_topics"] = [r.topic for r in results]
    click.echo(json.dumps(payload, sort_keys=True))


@main.command()
@click.option("--true", "true_path", required=True, type=click.Path())
@click.option("--pred", "pred_path", required=True, type=click.Path())
@click.option("--k", "n_topics", required=True, type=int)
@click.option("--out", "report_out", type=click.Path(), default=None)
def evaluate(true_path, pred_path, n_topics, report_out):
    """Compare two label files: accuracy, per-class F1, macro F1."""
    try:
        true_labels = _read_labels(true_path)
        pred_labels = _read_labels(pred_path)
        common = sorted(set(true_labels) & set(pred_labels))
        if not common:
            raise click.ClickException("no common ids between label files")
        report = clf.evaluate(
            [true_labels[i] for i in common],
            [pred_labels[i] for i in common],
            n_topics,
        )
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    if report_out:
        Path(report_out).write_text(report.to_json() + "\n", encoding="utf-8")
    _summary("evaluate", compared=len(common), accuracy=report.accuracy,
             macro_f1=report.macro_f1)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--head", "head_path", type=click.Path(), default=None)
@click.option("--index", "index_path", type=click.Path(), default=None)
@click.option("--bridge-url", default=None,
              help="Encoder bridge base URL for /v1/recommend_text.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(config_path, head_path, index_path, bridge_url, host, port):
    """Serve recommendations over HTTP from loaded artifacts."""
    import uvicorn

    from .service import create_app

    config = _load_config_file(config_path)
    head_path = _env_or(config, "head", head_path)
    index_path = _env_or(config, "index", index_path)
    bridge_url = _env_or(config, "bridge_url", bridge_url)
    if not head_path or not index_path:
        raise click.ClickException(
            "head and index artifacts are required (flags, config file, or "
            "ELSIREC_HEAD / ELSIREC_INDEX)"
        )
    try:
        head = clf.load_head(head_path)
        index = rec.load_index(index_path)
    except ElsirecError as exc:
        raise click.ClickException(str(exc))
    app = create_app(head, index, bridge_url)
    log.info("serving on %s:%d (K=%d, %d ELSI articles)", host, port, index.K,
             index.total)
    uvicorn.run(app, host=host, port=port, log_config=None)


if __name__ == "__main__":
    main()
