"""Encoder, detector, and chat backends plus their configuration."""

from __future__ import annotations

from .base import (
    BackendConfig,
    BoundingBox,
    ChatTurn,
    Detection,
    DetectorBackend,
    EncoderBackend,
    MLLMBackend,
)
from .http import HttpDetector, HttpEncoder, HttpMLLM
from .mock import MockDetector, MockEncoder, ScriptedMLLM, extract_tag, mock_embed


def build_encoder(config: BackendConfig) -> EncoderBackend:
    if config.kind == "http":
        return HttpEncoder(config)
    return MockEncoder(dim=config.dim, entities=config.entities)


def build_detector(config: BackendConfig) -> DetectorBackend:
    if config.kind == "http":
        return HttpDetector(config)
    return MockDetector(sidecar_path=config.sidecar or None)


def build_mllm(config: BackendConfig) -> MLLMBackend:
    if config.kind == "http":
        return HttpMLLM(config)
    return ScriptedMLLM.from_config(config.script, default_reply=config.default_reply or "unknown")


__all__ = [
    "BackendConfig",
    "BoundingBox",
    "ChatTurn",
    "Detection",
    "DetectorBackend",
    "EncoderBackend",
    "MLLMBackend",
    "HttpDetector",
    "HttpEncoder",
    "HttpMLLM",
    "MockDetector",
    "MockEncoder",
    "ScriptedMLLM",
    "extract_tag",
    "mock_embed",
    "build_encoder",
    "build_detector",
    "build_mllm",
]
