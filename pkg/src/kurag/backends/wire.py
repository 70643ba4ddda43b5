"""Canonical wire schemas for the chat, embed, and detect endpoints.

Request bodies are serialized with sorted keys and compact separators so they
can be compared byte-for-byte against the golden fixtures in schemas/. Any
server that speaks these shapes (hosted or self-hosted) works as a backend.
"""

from __future__ import annotations

import base64
import json

from ..errors import TransportFormatError
from .base import BoundingBox, ChatTurn, Detection

CHAT_PATH = "/chat"
EMBED_PATH = "/embed"
DETECT_PATH = "/detect"


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("utf-8")


def sniff_media_type(data: bytes) -> str:
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "image/png"
    if data[:3] == b"\xff\xd8\xff":
        return "image/jpeg"
    return "application/octet-stream"


def data_url(image: bytes) -> str:
    media = sniff_media_type(image)
    return f"data:{media};base64,{base64.b64encode(image).decode('ascii')}"


def build_chat_request(model: str, history: list[ChatTurn]) -> dict:
    messages = []
    for turn in history:
        content: list[dict] = []
        if turn.text:
            content.append({"type": "text", "text": turn.text})
        for image in turn.images:
            content.append({"type": "image_url", "image_url": {"url": data_url(image)}})
        messages.append({"role": turn.role, "content": content})
    return {"model": model, "messages": messages}


def parse_chat_response(body: dict) -> str:
    try:
        choices = body["choices"]
        message = choices[0]["message"]
        content = message["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportFormatError(f"chat response missing choices[0].message.content: {exc}")
    if not isinstance(content, str):
        raise TransportFormatError("chat response content is not a string")
    return content


def build_chat_response(model: str, content: str) -> dict:
    """Response shape the chat endpoint is expected to return."""
    return {
        "object": "chat.completion",
        "model": model,
        "choices": [
            {"index": 0, "message": {"role": "assistant", "content": content}}
        ],
    }


def build_embed_request_text(text: str) -> dict:
    return {"kind": "text", "text": text}


def build_embed_request_image(image: bytes) -> dict:
    return {"kind": "image", "image_b64": base64.b64encode(image).decode("ascii")}


def parse_embed_response(body: dict) -> tuple[list[float], int]:
    try:
        vector = body["vector"]
        dim = int(body["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TransportFormatError(f"embed response missing vector/dim: {exc}")
    if not isinstance(vector, list) or len(vector) != dim:
        raise TransportFormatError("embed response vector length does not match dim")
    return [float(x) for x in vector], dim


def build_detect_request(image: bytes) -> dict:
    return {"image_b64": base64.b64encode(image).decode("ascii")}


def parse_detect_response(body: dict) -> list[Detection]:
    try:
        raw = body["detections"]
    except (KeyError, TypeError) as exc:
        raise TransportFormatError(f"detect response missing detections: {exc}")
    detections = []
    for item in raw:
        try:
            box = BoundingBox(*[float(c) for c in item["box"]])
            crop = base64.b64decode(item["crop_b64"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportFormatError(f"malformed detection entry: {exc}")
        detections.append(Detection(box=box, crop=crop))
    return detections
