"""HTTP surface of the adapter: /embed, /detect, /chat, /info.

The endpoints speak the wire schemas published by the consuming engine
(schemas/README.md in the parent repository). This module only validates
payloads and maps errors; all model behavior lives in models.py. Statuses:
400 for malformed payloads, 404 never (no resources), 500 for encoder
inference failures, 502 for chat model failures.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import AdapterConfig, AdapterError
from .models import UndecodableImage, load_models

logger = logging.getLogger(__name__)


class SchemaViolation(AdapterError):
    pass


def _decode_b64(field: str, value) -> bytes:
    if not isinstance(value, str):
        raise SchemaViolation(f"{field} must be a base64 string")
    try:
        return base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise SchemaViolation(f"{field} is not valid base64: {exc}") from exc


def _decode_data_url(url: str) -> bytes:
    if not isinstance(url, str) or not url.startswith("data:"):
        raise SchemaViolation("image_url.url must be a data: URL")
    _, _, payload = url.partition(",")
    return _decode_b64("image_url.url", payload)


def parse_chat_messages(body: dict) -> list[dict]:
    """Validate the chat schema and return turns as {role, parts} dicts."""
    messages = body.get("messages")
    if not isinstance(messages, list) or not messages:
        raise SchemaViolation("messages must be a non-empty list")
    turns = []
    for message in messages:
        if not isinstance(message, dict):
            raise SchemaViolation("each message must be an object")
        role = message.get("role")
        if role not in ("user", "assistant", "system"):
            raise SchemaViolation(f"unsupported role {role!r}")
        content = message.get("content")
        if not isinstance(content, list):
            raise SchemaViolation("message content must be a list of parts")
        parts = []
        for part in content:
            kind = part.get("type") if isinstance(part, dict) else None
            if kind == "text":
                if not isinstance(part.get("text"), str):
                    raise SchemaViolation("text part requires a string 'text'")
                parts.append({"type": "text", "text": part["text"]})
            elif kind == "image_url":
                url = (part.get("image_url") or {}).get("url")
                parts.append({"type": "image", "data": _decode_data_url(url)})
            else:
                raise SchemaViolation(f"unsupported content part type {kind!r}")
        turns.append({"role": role, "parts": parts})
    return turns


def create_app(config: AdapterConfig | None = None) -> FastAPI:
    config = config or AdapterConfig()
    encoder, detector, chat = load_models(config)
    app = FastAPI(title="model-adapter", version="0.1.0")

    @app.exception_handler(SchemaViolation)
    async def _schema_violation(request: Request, exc: SchemaViolation):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(UndecodableImage)
    async def _undecodable(request: Request, exc: UndecodableImage):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/info")
    def info():
        return {
            "models": {
                "encoder": config.encoder_model,
                "detector": config.detector_model,
                "chat": config.chat_model,
            },
            "dim": config.embedding_dim,
            "device": config.device,
        }

    @app.post("/embed")
    def embed(payload: dict):
        kind = payload.get("kind")
        if kind == "text":
            text = payload.get("text")
            if not isinstance(text, str):
                raise SchemaViolation("embed kind=text requires a string 'text'")
            source = ("text", text)
        elif kind == "image":
            source = ("image", _decode_b64("image_b64", payload.get("image_b64")))
        else:
            raise SchemaViolation("embed kind must be 'text' or 'image'")
        try:
            if source[0] == "text":
                vector = encoder.embed_text(source[1])
            else:
                vector = encoder.embed_image(source[1])
        except AdapterError:
            raise
        except Exception as exc:
            logger.exception("encoder inference failed")
            return JSONResponse(status_code=500, content={"error": f"inference failure: {exc}"})
        return {"vector": vector, "dim": config.embedding_dim, "model": config.encoder_model}

    @app.post("/detect")
    def detect(payload: dict):
        image = _decode_b64("image_b64", payload.get("image_b64"))
        regions = detector.detect(image)
        return {
            "detections": [
                {
                    "box": [float(c) for c in region.box],
                    "crop_b64": base64.b64encode(region.crop_png).decode("ascii"),
                }
                for region in regions
            ],
            "model": config.detector_model,
        }

    @app.post("/chat")
    def chat_endpoint(payload: dict):
        turns = parse_chat_messages(payload)
        try:
            reply = chat.reply(turns)
        except Exception as exc:
            logger.exception("chat model failed")
            return JSONResponse(status_code=502, content={"error": f"upstream model error: {exc}"})
        return {
            "object": "chat.completion",
            "model": payload.get("model") or config.chat_model,
            "choices": [
                {"index": 0, "message": {"role": "assistant", "content": reply}}
            ],
        }

    return app


def main() -> None:
    import uvicorn

    parser = argparse.ArgumentParser(description="Run the model adapter service.")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    args = parser.parse_args()
    config = AdapterConfig.from_file(args.config) if args.config else AdapterConfig()
    app = create_app(config)
    uvicorn.run(app, host=args.host or config.host, port=args.port or config.port)


if __name__ == "__main__":
    main()
