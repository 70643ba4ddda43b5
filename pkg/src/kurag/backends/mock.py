"""Deterministic in-process backends for hermetic tests and offline runs.

The mock encoder recognizes planted markers of the form ``@@entity:<name>@@``
inside text or image bytes. Names registered at construction map to mutually
orthogonal basis vectors, so a tagged image and a tagged text for the same
entity have cosine 1.0 while distinct registered entities have cosine 0.0.
Untagged text that mentions a registered name embeds to the same basis
vector, so queries rewritten with a unit's name align with that unit's
chunks. Unregistered tags and untagged payloads map to hash-seeded
pseudo-random unit vectors, keyed by the tag name (shared across
modalities) or the raw bytes.
"""

from __future__ import annotations

import io
import json
import logging
import re
from hashlib import sha256

import numpy as np

from ..errors import ConfigError
from .base import BoundingBox, ChatTurn, Detection

logger = logging.getLogger(__name__)

TAG_RE = re.compile(r"@@entity:(.*?)@@", re.S)
TAG_BYTES_RE = re.compile(rb"@@entity:(.*?)@@", re.S)


def extract_tag(payload: bytes | str) -> str | None:
    """First planted entity marker in the payload, or None."""
    if isinstance(payload, str):
        m = TAG_RE.search(payload)
        return m.group(1).strip() if m else None
    m = TAG_BYTES_RE.search(payload)
    return m.group(1).decode("utf-8", errors="replace").strip() if m else None


def _seeded_unit_vector(seed_material: bytes, dim: int) -> np.ndarray:
    seed = int.from_bytes(sha256(seed_material).digest()[:8], "big")
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal(dim)
    norm = float(np.linalg.norm(v))
    return (v / norm).astype(np.float32)


def mock_embed(payload: bytes | str, dim: int, entities: dict[str, int] | None = None) -> np.ndarray:
    """Deterministic unit vector for a payload.

    Tagged payloads embed by tag name only (the rest of the payload is
    ignored), so the text form and the image form of the same marker are
    exactly aligned. ``entities`` maps registered names to basis indices;
    an untagged payload that mentions a registered name embeds to that
    entity's basis vector (first match in basis order), which models how a
    name written into a query steers retrieval toward that entity's text.
    Everything else hashes to a seeded pseudo-random unit vector.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")

    def basis(i: int) -> np.ndarray:
        v = np.zeros(dim, dtype=np.float32)
        v[i] = 1.0
        return v

    tag = extract_tag(payload)
    if tag is not None:
        if entities and tag in entities:
            return basis(entities[tag])
        return _seeded_unit_vector(b"entity:" + tag.encode("utf-8"), dim)
    raw = payload.encode("utf-8") if isinstance(payload, str) else bytes(payload)
    if entities:
        lowered = (payload if isinstance(payload, str) else raw.decode("utf-8", "replace")).casefold()
        for name, slot in sorted(entities.items(), key=lambda kv: kv[1]):
            if name.casefold() in lowered:
                return basis(slot)
    return _seeded_unit_vector(raw, dim)


class MockEncoder:
    """Shared text/image embedding space over planted markers.

    Register the corpus entity names up front when a test needs guaranteed
    orthogonality between distinct entities; unregistered tags still embed
    deterministically but are only near-orthogonal in expectation.
    """

    def __init__(self, dim: int = 512, entities: list[str] | tuple[str, ...] = ()):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        if len(entities) > dim:
            raise ConfigError(
                f"cannot assign {len(entities)} orthogonal entities at dim {dim}"
            )
        self._dim = dim
        self._entities = {name: i for i, name in enumerate(sorted(set(entities)))}

    def dim(self) -> int:
        return self._dim

    def embed_text(self, text: str) -> np.ndarray:
        return mock_embed(text, self._dim, self._entities)

    def embed_image(self, image: bytes) -> np.ndarray:
        return mock_embed(image, self._dim, self._entities)


def _image_bounds(data: bytes) -> BoundingBox:
    try:
        from PIL import Image

        with Image.open(io.BytesIO(data)) as img:
            return BoundingBox(0.0, 0.0, float(img.width), float(img.height))
    except Exception:
        return BoundingBox(0.0, 0.0, 0.0, 0.0)


class MockDetector:
    """Detector double: planted detections, a sidecar file, or whole-image.

    Priority: explicit ``detections`` passed at construction, then a sidecar
    JSON file (list of ``{"box": [x0,y0,x1,y1], "crop": "<text>"}`` objects,
    ``crop_b64`` also accepted), then the full image as a single detection.
    """

    def __init__(
        self,
        detections: list[Detection] | None = None,
        sidecar_path: str | None = None,
    ):
        self._detections = list(detections) if detections is not None else None
        if self._detections is None and sidecar_path:
            self._detections = _load_sidecar(sidecar_path)

    def detect(self, image: bytes) -> list[Detection]:
        if self._detections is not None:
            return list(self._detections)
        return [Detection(box=_image_bounds(image), crop=image)]


def _load_sidecar(path: str) -> list[Detection]:
    import base64

    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    detections = []
    for item in raw:
        box = BoundingBox(*[float(c) for c in item["box"]])
        if "crop_b64" in item:
            crop = base64.b64decode(item["crop_b64"])
        else:
            crop = item["crop"].encode("utf-8")
        detections.append(Detection(box=box, crop=crop))
    return detections


INITIAL_ANSWER_PLACEHOLDER = "$initial_answer"


class ScriptedMLLM:
    """Chat double driven by substring rules against the latest turn.

    Each rule is ``(matcher, reply)`` where matcher is one substring or a
    tuple of substrings that must all appear in the latest turn's text. The
    first matching rule wins; with no match the default reply is returned.
    A reply of ``$initial_answer`` echoes the first assistant message in the
    history, which lets scripts model "output the initial answer again".
    """

    def __init__(
        self,
        rules: list[tuple[str | tuple[str, ...], str]],
        default_reply: str = "unknown",
    ):
        self._rules = [
            ((m,) if isinstance(m, str) else tuple(m), reply) for m, reply in rules
        ]
        self._default = default_reply

    @classmethod
    def from_config(cls, script: list[dict], default_reply: str = "unknown") -> "ScriptedMLLM":
        rules = []
        for entry in script:
            matcher = entry["contains"]
            rules.append((tuple(matcher) if isinstance(matcher, list) else matcher, entry["reply"]))
        return cls(rules, default_reply=default_reply)

    def chat(self, history: list[ChatTurn]) -> str:
        if not history:
            return self._default
        latest = history[-1].text
        reply = self._default
        for needles, rule_reply in self._rules:
            if all(needle in latest for needle in needles):
                reply = rule_reply
                break
        if reply == INITIAL_ANSWER_PLACEHOLDER:
            for turn in history:
                if turn.role == "assistant":
                    return turn.text
            logger.warning("scripted reply requested the initial answer but none exists")
            return self._default
        return reply
