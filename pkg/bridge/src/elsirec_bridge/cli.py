"""Bridge CLI: encode a corpus file or serve the encode endpoint."""

from __future__ import annotations

import json
import logging
import sys

import click

from .encoder import DocumentEncoder, EncoderSpec, encode_corpus

log = logging.getLogger("elsirec-bridge")


@click.group()
@click.option("--verbose", is_flag=True)
def main(verbose):
    """Transformer encoder bridge for the ELSI recommender."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--model", default="pubmedbert", show_default=True,
              help="Checkpoint alias or local checkpoint directory.")
@click.option("--in", "corpus_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--pooling", default="pooler", show_default=True,
              type=click.Choice(["pooler", "first_token", "mean"]))
@click.option("--max-tokens", default=512, show_default=True)
@click.option("--no-tanh", is_flag=True,
              help="Skip Tanh for first_token/mean pooling (pooler output "
                   "is always activated).")
@click.option("--batch-size", default=10, show_default=True)
def encode(model, corpus_path, out_path, pooling, max_tokens, no_tanh, batch_size):
    """Encode a corpus JSONL file into an embedding interchange file."""
    spec = EncoderSpec(
        model_name=model, max_tokens=max_tokens, pooling=pooling,
        apply_tanh=not no_tanh, batch_size=batch_size,
    )
    try:
        summary = encode_corpus(corpus_path, spec, out_path)
    except (ValueError, RuntimeError) as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps({"command": "encode", **summary}, sort_keys=True))


@main.command()
@click.option("--model", default="pubmedbert", show_default=True)
@click.option("--pooling", default="pooler", show_default=True,
              type=click.Choice(["pooler", "first_token", "mean"]))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8100, show_default=True)
def serve(model, pooling, host, port):
    """Serve POST /encode over HTTP."""
    import uvicorn

    from .service import create_app

    try:
        encoder = DocumentEncoder(EncoderSpec(model_name=model, pooling=pooling))
    except (ValueError, RuntimeError) as exc:
        raise click.ClickException(str(exc))
    log.info("serving %s (dim %d) on %s:%d", encoder.encoder_name, encoder.dim,
             host, port)
    uvicorn.run(create_app(encoder), host=host, port=port, log_config=None)


if __name__ == "__main__":
    main()
