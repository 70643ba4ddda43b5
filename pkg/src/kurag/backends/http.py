"""HTTP clients for remote encoder, detector, and chat backends.

One retry policy serves all three: transient failures (timeouts, 429, 5xx)
back off exponentially until the configured retry cap, everything else maps
to a typed transport error immediately.
"""

from __future__ import annotations

import logging
import os
import time

import httpx
import numpy as np

from ..errors import TransportFormatError, TransportStatusError, TransportTimeout
from . import wire
from .base import BackendConfig, ChatTurn, Detection

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class _HttpBase:
    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        backoff_base: float = 0.2,
    ):
        self._config = config
        self._backoff_base = backoff_base
        headers = {}
        key_env = config.api_key_env
        if key_env and os.environ.get(key_env):
            headers["Authorization"] = f"Bearer {os.environ[key_env]}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.timeout_ms / 1000.0,
            headers=headers,
            transport=transport,
        )

    def _post_json(self, path: str, payload: dict) -> dict:
        attempts = self._config.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                delay = self._backoff_base * (2 ** (attempt - 1))
                if delay:
                    time.sleep(delay)
            try:
                response = self._client.post(
                    path,
                    content=wire.canonical_json(payload),
                    headers={"Content-Type": "application/json"},
                )
            except httpx.TimeoutException as exc:
                last_error = TransportTimeout(f"POST {path} timed out: {exc}")
                logger.warning("backend timeout on %s (attempt %d/%d)", path, attempt + 1, attempts)
                continue
            except httpx.HTTPError as exc:
                raise TransportFormatError(f"POST {path} failed: {exc}") from exc
            if response.status_code in RETRYABLE_STATUS:
                last_error = TransportStatusError(response.status_code, response.text[:200])
                logger.warning(
                    "backend HTTP %d on %s (attempt %d/%d)",
                    response.status_code, path, attempt + 1, attempts,
                )
                continue
            if response.status_code >= 400:
                raise TransportStatusError(response.status_code, response.text[:200])
            try:
                return response.json()
            except ValueError as exc:
                raise TransportFormatError(f"POST {path} returned non-JSON body") from exc
        assert last_error is not None
        raise last_error


class HttpMLLM(_HttpBase):
    """Chat client. POSTs the canonical chat request and returns the reply text."""

    def chat(self, history: list[ChatTurn]) -> str:
        if not history:
            raise ValueError("chat history must be non-empty")
        path = self._config.chat_path or wire.CHAT_PATH
        body = self._post_json(path, wire.build_chat_request(self._config.model, history))
        return wire.parse_chat_response(body)


class HttpEncoder(_HttpBase):
    """Embedding client against the /embed endpoint."""

    def dim(self) -> int:
        return self._config.dim

    def _embed(self, payload: dict) -> np.ndarray:
        body = self._post_json(wire.EMBED_PATH, payload)
        vector, dim = wire.parse_embed_response(body)
        if dim != self._config.dim:
            raise TransportFormatError(
                f"encoder returned dim {dim}, config declares {self._config.dim}"
            )
        return np.asarray(vector, dtype=np.float32)

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed(wire.build_embed_request_text(text))

    def embed_image(self, image: bytes) -> np.ndarray:
        return self._embed(wire.build_embed_request_image(image))


class HttpDetector(_HttpBase):
    """Detection client against the /detect endpoint."""

    def detect(self, image: bytes) -> list[Detection]:
        body = self._post_json(wire.DETECT_PATH, wire.build_detect_request(image))
        return wire.parse_detect_response(body)
