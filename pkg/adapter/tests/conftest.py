"""Fixtures for the adapter conformance suite.

The golden wire fixtures live in the parent repository's schemas/golden
directory; the adapter consumes them as its published interface contract.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from model_adapter.config import AdapterConfig
from model_adapter.service import create_app

GOLDEN_DIR = Path(__file__).resolve().parents[2] / "schemas" / "golden"


@pytest.fixture(scope="session")
def golden():
    def load(name: str) -> dict:
        return json.loads((GOLDEN_DIR / name).read_text())

    return load


@pytest.fixture(scope="session")
def client() -> TestClient:
    return TestClient(create_app(AdapterConfig(embedding_dim=64)))


def png_bytes(width: int, height: int, background=(12, 12, 12), square=None) -> bytes:
    """A synthetic PNG; ``square`` paints a bright (x0, y0, x1, y1) region."""
    img = Image.new("RGB", (width, height), background)
    if square:
        x0, y0, x1, y1 = square
        img.paste(Image.new("RGB", (x1 - x0, y1 - y0), (240, 240, 240)), (x0, y0))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def assert_same_shape(golden_value, actual, path="$"):
    """Structural conformance: same keys and same scalar types as the golden.

    Lists compare every actual element against the golden's first element.
    """
    if isinstance(golden_value, dict):
        assert isinstance(actual, dict), f"{path}: expected object"
        assert set(actual) == set(golden_value), (
            f"{path}: keys {sorted(actual)} != golden {sorted(golden_value)}"
        )
        for key, sub in golden_value.items():
            assert_same_shape(sub, actual[key], f"{path}.{key}")
    elif isinstance(golden_value, list):
        assert isinstance(actual, list), f"{path}: expected array"
        if golden_value:
            for i, element in enumerate(actual):
                assert_same_shape(golden_value[0], element, f"{path}[{i}]")
    elif isinstance(golden_value, bool):
        assert isinstance(actual, bool), f"{path}: expected bool"
    elif isinstance(golden_value, (int, float)):
        assert isinstance(actual, (int, float)) and not isinstance(actual, bool), (
            f"{path}: expected number, got {type(actual).__name__}"
        )
    elif isinstance(golden_value, str):
        assert isinstance(actual, str), f"{path}: expected string"
    elif golden_value is None:
        assert actual is None, f"{path}: expected null"
