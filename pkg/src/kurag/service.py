"""HTTP service exposing the operator surface.

Every endpoint delegates to the same ops facade the CLI uses. Error mapping:
400 for validation problems, 404 for missing ids, 409 for conflicts, 502 for
model-backend transport failures.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.responses import JSONResponse

from . import ops
from .config import AppConfig
from .errors import (
    ConfigError,
    CorpusFormatError,
    DuplicateDocumentError,
    NotFoundError,
    TransportError,
)
from .reasoner import MODES

logger = logging.getLogger(__name__)


def create_app(config: AppConfig | None = None, store=None, backends=None) -> FastAPI:
    """Build the service around one shared store and backend set.

    The store loads from config.store_dir when a manifest exists, otherwise
    the service starts empty and /ingest populates it. Mutating endpoints
    persist the store after each change.
    """
    config = config or AppConfig()
    backends = backends or ops.build_backends(config)
    if store is None:
        store = ops.open_store(config, backends.encoder, must_exist=False)
    app = FastAPI(title="kurag", version="0.1.0")
    app.state.config = config
    app.state.store = store
    app.state.backends = backends

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(DuplicateDocumentError)
    async def _conflict(request: Request, exc: DuplicateDocumentError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(CorpusFormatError)
    async def _bad_corpus(request: Request, exc: CorpusFormatError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ConfigError)
    async def _bad_config(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    async def _bad_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(TransportError)
    async def _backend_down(request: Request, exc: TransportError):
        return JSONResponse(status_code=502, content={"error": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", **store.stats()}

    @app.post("/ingest")
    def ingest(payload: dict):
        corpus_path = payload.get("corpus_path")
        if not isinstance(corpus_path, str) or not corpus_path:
            raise ValueError("body must contain a corpus_path string")
        summary = ops.ingest_corpus(config, corpus_path, store=store)
        return summary.to_dict()

    @app.post("/query")
    def query(
        question: str = Form(...),
        mode: str = Form("kurag"),
        image: UploadFile | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        image_bytes = image.file.read() if image is not None else None
        if image_bytes is None and mode != "no_ku":
            raise ValueError("an image upload is required for modes other than no_ku")
        state = ops.query_once(
            config, question, image_bytes, mode=mode, store=store, backends=backends
        )
        return state.to_dict()

    @app.get("/ku/{ku_id}")
    def ku_get(ku_id: str):
        return ops.unit_info(store, ku_id)

    @app.delete("/chunk/{chunk_id}")
    def chunk_delete(chunk_id: int):
        return ops.delete_chunk(config, store, chunk_id)

    @app.post("/eval")
    def eval_run(payload: dict):
        dataset_path = payload.get("dataset_path")
        if not isinstance(dataset_path, str) or not dataset_path:
            raise ValueError("body must contain a dataset_path string")
        modes = payload.get("modes") or [payload.get("mode", "kurag")]
        if not all(m in MODES for m in modes):
            raise ValueError(f"modes must be among {MODES}")
        reports = ops.run_evaluation(
            config, dataset_path, list(modes),
            out_dir=payload.get("out_dir"), store=store, backends=backends,
        )
        return {"reports": [r.to_dict() for r in reports]}

    return app
