"""Operation facade shared by the CLI and the HTTP service.

Both surfaces call these functions so there is exactly one implementation of
each operator action; the surfaces only translate errors into exit codes or
status codes.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

from .backends import build_detector, build_encoder, build_mllm
from .config import AppConfig
from .errors import DuplicateDocumentError, NotFoundError
from .evaluation import EvalReport, load_eval_jsonl, run_eval
from .pipeline import VisualQuery
from .reasoner import Backends, DialogueState, answer_query
from .report import write_report_files
from .store import KnowledgeStore, load_corpus_jsonl, resolve_image_ref

logger = logging.getLogger(__name__)


@dataclass
class IngestSummary:
    documents: int
    chunks: int
    units: int
    chunk_vectors: int
    image_vectors: int

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "chunks": self.chunks,
            "units": self.units,
            "chunk_vectors": self.chunk_vectors,
            "image_vectors": self.image_vectors,
        }


def build_backends(config: AppConfig) -> Backends:
    return Backends(
        encoder=build_encoder(config.encoder),
        detector=build_detector(config.detector),
        mllm=build_mllm(config.mllm),
    )


def open_store(config: AppConfig, encoder, must_exist: bool = True) -> KnowledgeStore:
    manifest = os.path.join(config.store_dir, "store.json")
    if os.path.exists(manifest):
        return KnowledgeStore.load(config.store_dir, encoder)
    if must_exist:
        raise NotFoundError(
            f"no store at {config.store_dir!r}; run the ingest command first"
        )
    return KnowledgeStore(encoder, config=config.store)


def ingest_corpus(config: AppConfig, corpus_path: str, store: KnowledgeStore | None = None) -> IngestSummary:
    """Ingest a JSONL corpus into the configured store and persist it.

    Aborts on the first malformed line or duplicate doc_id, reporting the
    line number; nothing is persisted on failure.
    """
    backends_encoder = build_encoder(config.encoder)
    if store is None:
        store = open_store(config, backends_encoder, must_exist=False)
    base_dir = os.path.dirname(os.path.abspath(corpus_path))
    store.image_loader = lambda ref: resolve_image_ref(ref, base_dir)
    for line_no, doc in load_corpus_jsonl(corpus_path):
        try:
            store.ingest_document(doc)
        except DuplicateDocumentError as exc:
            raise DuplicateDocumentError(f"line {line_no}: {exc}") from exc
    store.save(config.store_dir)
    stats = store.stats()
    return IngestSummary(
        documents=stats["documents"],
        chunks=stats["chunks"],
        units=stats["units"],
        chunk_vectors=stats["chunk_vectors"],
        image_vectors=stats["image_vectors"],
    )


def query_once(
    config: AppConfig,
    question: str,
    image: bytes | None,
    mode: str = "kurag",
    store: KnowledgeStore | None = None,
    backends: Backends | None = None,
) -> DialogueState:
    backends = backends or build_backends(config)
    if store is None:
        store = open_store(config, backends.encoder)
    return answer_query(
        VisualQuery(text=question, image=image),
        store,
        backends,
        config=config.pipeline,
        mode=mode,
        passage_mode=config.passage_mode,
    )


def unit_info(store: KnowledgeStore, ku_id: str) -> dict:
    unit = store.lookup_unit(ku_id)
    return {
        "ku_id": unit.ku_id,
        "name": unit.name,
        "kind": unit.kind,
        "image_ids": list(unit.image_ids),
        "chunk_ids": list(unit.chunk_ids),
        "chunks": [store.lookup_chunk(cid).text for cid in unit.chunk_ids],
    }


def delete_chunk(config: AppConfig, store: KnowledgeStore, chunk_id: int) -> dict:
    deleted = store.delete_chunk_and_prune(chunk_id)
    store.save(config.store_dir)
    return {"chunk_id": chunk_id, "deleted_units": deleted}


def run_evaluation(
    config: AppConfig,
    dataset_path: str,
    modes: list[str],
    out_dir: str | None = None,
    store: KnowledgeStore | None = None,
    backends: Backends | None = None,
) -> list[EvalReport]:
    """Evaluate a dataset under one or more modes, optionally writing the
    JSON/CSV reports and the mode-comparison figure."""
    backends = backends or build_backends(config)
    if store is None:
        store = open_store(config, backends.encoder)
    items = load_eval_jsonl(dataset_path)
    base_dir = os.path.dirname(os.path.abspath(dataset_path))
    reports = [
        run_eval(
            items,
            mode,
            store,
            backends,
            config=config.pipeline,
            workers=config.eval_workers,
            passage_mode=config.passage_mode,
            image_base_dir=base_dir,
        )
        for mode in modes
    ]
    if out_dir:
        write_report_files(reports, out_dir)
    return reports
