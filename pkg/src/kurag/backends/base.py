"""Model backend contracts: multimodal encoder, instance detector, chat model.

Every backend is a pure function of its explicit inputs plus static config,
so pipeline runs are replayable. Encoders must return unit-normalized vectors
with one shared dimensionality across text and image inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    crop: bytes


@dataclass(frozen=True)
class ChatTurn:
    """One message in an explicit chat history. Images travel as raw bytes."""

    role: str
    text: str
    images: tuple[bytes, ...] = ()


@runtime_checkable
class EncoderBackend(Protocol):
    def dim(self) -> int: ...

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_image(self, image: bytes) -> np.ndarray: ...


@runtime_checkable
class DetectorBackend(Protocol):
    def detect(self, image: bytes) -> list[Detection]: ...


@runtime_checkable
class MLLMBackend(Protocol):
    def chat(self, history: list[ChatTurn]) -> str: ...


@dataclass
class BackendConfig:
    """One backend slot from the app config.

    kind selects the implementation: "mock" builds the deterministic
    in-process double, "http" builds a network client against base_url.
    Mock-only fields (dim, entities, script, default_reply, sidecar) are
    ignored by http backends and vice versa.
    """

    kind: str = "mock"
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout_ms: int = 30000
    max_retries: int = 3
    # chat endpoint path; hosted OpenAI-style servers use "/chat/completions"
    chat_path: str = "/chat"
    # mock encoder
    dim: int = 512
    entities: list[str] = field(default_factory=list)
    # scripted chat
    script: list[dict] = field(default_factory=list)
    default_reply: str = ""
    # mock detector
    sidecar: str = ""

    KNOWN_KEYS = (
        "kind", "base_url", "model", "api_key_env", "timeout_ms", "max_retries",
        "chat_path", "dim", "entities", "script", "default_reply", "sidecar",
    )

    @classmethod
    def from_dict(cls, raw: dict) -> "BackendConfig":
        from ..errors import ConfigError

        unknown = set(raw) - set(cls.KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown backend config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        if cfg.kind not in ("mock", "http"):
            raise ConfigError(f"backend kind must be 'mock' or 'http', got {cfg.kind!r}")
        if cfg.kind == "http" and not cfg.base_url:
            raise ConfigError("http backend requires base_url")
        return cfg
