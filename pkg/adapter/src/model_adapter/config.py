"""Adapter configuration: which model backs each role, and where to bind.

Model identifiers are strings of the form ``<provider>:<name>``. Built-in
providers need no weights and keep the service fully deterministic;
``st:`` (sentence-transformers) and ``hf:`` (transformers) load real models
when the corresponding libraries and weights are available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class AdapterError(Exception):
    pass


@dataclass
class AdapterConfig:
    encoder_model: str = "builtin:hash"
    detector_model: str = "builtin:contrast"
    chat_model: str = "builtin:echo"
    embedding_dim: int = 512
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8901

    KNOWN_KEYS = (
        "encoder_model", "detector_model", "chat_model",
        "embedding_dim", "device", "host", "port",
    )

    def __post_init__(self):
        if self.embedding_dim < 2:
            raise AdapterError("embedding_dim must be >= 2")

    @classmethod
    def from_dict(cls, raw: dict) -> "AdapterConfig":
        unknown = set(raw) - set(cls.KNOWN_KEYS)
        if unknown:
            raise AdapterError(f"unknown adapter config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path: str) -> "AdapterConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise AdapterError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise AdapterError(f"config file {path} is not valid JSON: {exc.msg}") from exc
        return cls.from_dict(raw)
