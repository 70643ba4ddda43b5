"""Operator command line: ingest corpora, answer queries, run evaluations,
manage units, and launch the HTTP service.

Exit codes: 0 success, 1 internal failure, 2 usage or input problem.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from . import ops
from .config import AppConfig
from .errors import (
    ConfigError,
    CorpusFormatError,
    DuplicateDocumentError,
    KuragError,
    NotFoundError,
)
from .reasoner import MODES

logger = logging.getLogger(__name__)

_INPUT_ERRORS = (ConfigError, CorpusFormatError, DuplicateDocumentError, NotFoundError, FileNotFoundError)


def _load_config(path: str | None) -> AppConfig:
    if path is None:
        return AppConfig()
    return AppConfig.from_file(path)


def _abort(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, _INPUT_ERRORS) else 1)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file; defaults apply when omitted.")
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
@click.pass_context
def main(ctx, config_path, verbose):
    """Multimodal knowledge-unit RAG engine."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING)
    try:
        ctx.obj = _load_config(config_path)
    except KuragError as exc:
        _abort(exc)


@main.command()
@click.argument("corpus", type=click.Path())
@click.pass_obj
def ingest(config: AppConfig, corpus):
    """Ingest a JSONL corpus into the store and persist it."""
    if not os.path.exists(corpus):
        _abort(FileNotFoundError(f"corpus file not found: {corpus}"))
    try:
        summary = ops.ingest_corpus(config, corpus)
    except KuragError as exc:
        _abort(exc)
    click.echo(
        f"{summary.documents} docs, {summary.chunks} chunks, {summary.units} KUs, "
        f"{summary.chunk_vectors + summary.image_vectors} vectors "
        f"({summary.chunk_vectors} chunk / {summary.image_vectors} image)"
    )


@main.command()
@click.option("--question", required=True, help="The textual question.")
@click.option("--image", "image_path", type=click.Path(), default=None,
              help="Query image path (optional only in no_ku mode).")
@click.option("--mode", type=click.Choice(MODES), default="kurag", show_default=True)
@click.option("--transcript", "transcript_path", type=click.Path(), default=None,
              help="Write the full dialogue state as JSON.")
@click.pass_obj
def query(config: AppConfig, question, image_path, mode, transcript_path):
    """Answer one visual question against the ingested store."""
    image = None
    if image_path is not None:
        if not os.path.isfile(image_path):
            _abort(FileNotFoundError(f"image file not found: {image_path}"))
        with open(image_path, "rb") as fh:
            image = fh.read()
    elif mode != "no_ku":
        _abort(ConfigError("--image is required for modes other than no_ku"))
    try:
        state = ops.query_once(config, question, image, mode=mode)
    except KuragError as exc:
        _abort(exc)
    click.echo(state.final_answer)
    if transcript_path:
        with open(transcript_path, "w", encoding="utf-8") as fh:
            json.dump(state.to_dict(), fh, indent=2, sort_keys=True)
        click.echo(f"transcript written to {transcript_path}", err=True)


@main.command(name="eval")
@click.argument("dataset", type=click.Path())
@click.option("--mode", "modes", type=click.Choice(MODES), multiple=True,
              default=("kurag",), show_default=True,
              help="Repeat to compare modes in one report.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for JSON/CSV reports and the accuracy figure.")
@click.option("--min-accuracy", type=float, default=None,
              help="Fail (exit 1) if any mode scores below this floor.")
@click.pass_obj
def eval_cmd(config: AppConfig, dataset, modes, out_dir, min_accuracy):
    """Run the evaluation harness over a JSONL dataset."""
    if not os.path.exists(dataset):
        _abort(FileNotFoundError(f"dataset file not found: {dataset}"))
    try:
        reports = ops.run_evaluation(config, dataset, list(modes), out_dir=out_dir)
    except KuragError as exc:
        _abort(exc)
    for report in reports:
        click.echo(f"mode={report.mode} n={report.n} accuracy={report.accuracy:.4f}")
    if out_dir:
        click.echo(f"reports written to {out_dir}", err=True)
    floor = min_accuracy if min_accuracy is not None else config.min_accuracy
    if floor is not None and any(r.accuracy < floor for r in reports):
        click.echo(f"accuracy below configured floor {floor}", err=True)
        sys.exit(1)


@main.group()
def ku():
    """Knowledge unit management."""


@ku.command(name="show")
@click.argument("ku_id")
@click.pass_obj
def ku_show(config: AppConfig, ku_id):
    """Print one knowledge unit as JSON."""
    try:
        backends = ops.build_backends(config)
        store = ops.open_store(config, backends.encoder)
        info = ops.unit_info(store, ku_id)
    except KuragError as exc:
        _abort(exc)
    click.echo(json.dumps(info, indent=2, sort_keys=True))


@main.group()
def chunk():
    """Chunk management."""


@chunk.command(name="delete")
@click.argument("chunk_id", type=int)
@click.pass_obj
def chunk_delete(config: AppConfig, chunk_id):
    """Delete a chunk; prunes any unit whose detail end empties out."""
    try:
        backends = ops.build_backends(config)
        store = ops.open_store(config, backends.encoder)
        result = ops.delete_chunk(config, store, chunk_id)
    except KuragError as exc:
        _abort(exc)
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@main.command()
@click.option("--host", default=None, help="Bind address (overrides config).")
@click.option("--port", type=int, default=None, help="Bind port (overrides config).")
@click.pass_obj
def serve(config: AppConfig, host, port):
    """Run the HTTP service exposing the same operations."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(config)
    except KuragError as exc:
        _abort(exc)
    uvicorn.run(app, host=host or config.host, port=port or config.port)


if __name__ == "__main__":
    main()
