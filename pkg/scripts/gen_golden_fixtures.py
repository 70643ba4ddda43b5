#!/usr/bin/env python3
"""Regenerate the golden wire-schema fixtures under schemas/golden/.

The fixtures freeze the exact bytes clients put on the wire and the response
shapes servers must produce. Tests compare against these files byte-for-byte,
so regenerate only when the wire schema intentionally changes.
"""

from __future__ import annotations

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from kurag.backends import wire
from kurag.backends.base import ChatTurn

OUT_DIR = pathlib.Path(__file__).resolve().parents[1] / "schemas" / "golden"

CHAT_HISTORY = [
    ChatTurn(
        role="user",
        text="What is shown in these two images?",
        images=(b"@@entity:alpha@@", b"@@entity:beta@@"),
    ),
]

CORRECTION_HISTORY = [
    ChatTurn(role="user", text="When was this bridge built?", images=(b"@@entity:alpha@@",)),
    ChatTurn(role="assistant", text="unknown"),
    ChatTurn(
        role="user",
        text="[Alpha Bridge] The bridge opened in 1905.\n\nPlease reconsider.",
        images=(b"@@entity:alpha@@",),
    ),
]


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    fixtures = {
        "chat_request_two_images.json": wire.build_chat_request("mock-mllm", CHAT_HISTORY),
        "chat_request_two_turns.json": wire.build_chat_request("mock-mllm", CORRECTION_HISTORY),
        "chat_response.json": wire.build_chat_response("mock-mllm", "A lift bridge."),
        "embed_request_text.json": wire.build_embed_request_text("When was this bridge built?"),
        "embed_request_image.json": wire.build_embed_request_image(b"@@entity:alpha@@"),
        "embed_response.json": {
            "dim": 8,
            "model": "mock-encoder",
            "vector": [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        },
        "detect_request.json": wire.build_detect_request(b"@@entity:alpha@@"),
        "detect_response.json": {
            "detections": [
                {"box": [8.0, 8.0, 56.0, 56.0], "crop_b64": "Y3JvcC1ieXRlcw=="}
            ],
            "model": "mock-detector",
        },
    }
    for name, payload in fixtures.items():
        path = OUT_DIR / name
        path.write_bytes(wire.canonical_json(payload) + b"\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
