"""Model loading for the three adapter roles.

Each loader returns a small callable object; the service never contains
model logic itself. Built-in models are deterministic and dependency-light:

- ``builtin:hash`` encoder: seeded-hash unit vectors over raw payload bytes,
  shared for text and images.
- ``builtin:contrast`` detector: foreground regions that contrast with the
  image's corner background, via connected-component labeling.
- ``builtin:echo`` chat: deterministic acknowledgement of the latest turn.

``st:<model>`` / ``yolo:<model>`` / ``hf:<model>`` identifiers load real
models through their libraries when installed; the adapter only checks that
the loaded encoder's output dim matches the declared one.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from hashlib import sha256

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import AdapterConfig, AdapterError


class UndecodableImage(AdapterError):
    pass


# --- encoder ---------------------------------------------------------------------


class HashEncoder:
    """Deterministic unit vectors from payload bytes; text and images share
    the procedure so the endpoint behaves uniformly across kinds."""

    def __init__(self, dim: int):
        self.dim = dim

    def _vector(self, payload: bytes) -> list[float]:
        seed = int.from_bytes(sha256(payload).digest()[:8], "big")
        rng = np.random.Generator(np.random.PCG64(seed))
        v = rng.standard_normal(self.dim)
        v = v / np.linalg.norm(v)
        return [float(x) for x in v]

    def embed_text(self, text: str) -> list[float]:
        return self._vector(b"text:" + text.encode("utf-8"))

    def embed_image(self, image: bytes) -> list[float]:
        return self._vector(b"image:" + image)


class SentenceTransformerEncoder:
    def __init__(self, model_name: str, device: str, declared_dim: int):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise AdapterError(
                "sentence-transformers is not installed; use a builtin encoder"
            ) from exc
        self._model = SentenceTransformer(model_name, device=device)
        self.dim = self._model.get_sentence_embedding_dimension()
        if self.dim != declared_dim:
            raise AdapterError(
                f"encoder {model_name!r} outputs dim {self.dim}, "
                f"config declares {declared_dim}"
            )

    def _normalize(self, v: np.ndarray) -> list[float]:
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        return [float(x) for x in v / np.linalg.norm(v)]

    def embed_text(self, text: str) -> list[float]:
        return self._normalize(self._model.encode([text])[0])

    def embed_image(self, image: bytes) -> list[float]:
        with Image.open(io.BytesIO(image)) as img:
            return self._normalize(self._model.encode([img.convert("RGB")])[0])


# --- detector ----------------------------------------------------------------------


@dataclass
class DetectedRegion:
    box: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive right/bottom)
    crop_png: bytes


class ContrastDetector:
    """Connected regions that contrast with the corner-sampled background.

    Good enough to propose boxes for prominent objects on plain backgrounds;
    a blank image yields no detections.
    """

    def __init__(self, threshold: float = 24.0, min_area: int = 16):
        self.threshold = threshold
        self.min_area = min_area

    def detect(self, image: bytes) -> list[DetectedRegion]:
        from scipy import ndimage

        try:
            with Image.open(io.BytesIO(image)) as img:
                rgb = img.convert("RGB")
        except (UnidentifiedImageError, OSError) as exc:
            raise UndecodableImage(f"cannot decode image: {exc}") from exc
        gray = np.asarray(rgb.convert("L"), dtype=np.float32)
        corners = np.concatenate([
            gray[:4, :4].ravel(), gray[:4, -4:].ravel(),
            gray[-4:, :4].ravel(), gray[-4:, -4:].ravel(),
        ])
        background = float(np.median(corners))
        mask = np.abs(gray - background) > self.threshold
        labels, count = ndimage.label(mask)
        regions: list[DetectedRegion] = []
        for slice_y, slice_x in ndimage.find_objects(labels):
            if (slice_y.stop - slice_y.start) * (slice_x.stop - slice_x.start) < self.min_area:
                continue
            box = (slice_x.start, slice_y.start, slice_x.stop, slice_y.stop)
            crop = rgb.crop(box)
            buf = io.BytesIO()
            crop.save(buf, format="PNG")
            regions.append(DetectedRegion(box=box, crop_png=buf.getvalue()))
        regions.sort(key=lambda r: (r.box[1], r.box[0]))
        return regions


def load_yolo_detector(model_name: str, device: str):
    try:
        from ultralytics import YOLO  # noqa: F401
    except ImportError as exc:
        raise AdapterError(
            "ultralytics is not installed; use the builtin detector"
        ) from exc
    raise AdapterError("yolo detector loading requires local weights; not bundled")


# --- chat ----------------------------------------------------------------------------


class EchoChat:
    """Deterministic stub reply: acknowledges the latest turn's text and
    image count. Useful for wiring and schema tests, not for answers."""

    def reply(self, turns: list[dict]) -> str:
        latest = turns[-1]
        texts = [p["text"] for p in latest["parts"] if p["type"] == "text"]
        n_images = sum(1 for p in latest["parts"] if p["type"] == "image")
        head = (texts[0] if texts else "").strip().splitlines()[0][:120]
        return f"[echo] {head} ({n_images} image{'s' if n_images != 1 else ''} attached)"


class HfChat:
    def __init__(self, model_name: str, device: str):
        try:
            from transformers import pipeline  # noqa: F401
        except ImportError as exc:
            raise AdapterError("transformers is not installed; use builtin:echo") from exc
        raise AdapterError("hf chat loading requires local weights; not bundled")


# --- registry -----------------------------------------------------------------------


def _split(identifier: str) -> tuple[str, str]:
    provider, _, name = identifier.partition(":")
    return provider, name


def load_models(config: AdapterConfig):
    """Instantiate (encoder, detector, chat) for the configured identifiers."""
    provider, name = _split(config.encoder_model)
    if provider == "builtin":
        encoder = HashEncoder(config.embedding_dim)
    elif provider == "st":
        encoder = SentenceTransformerEncoder(name, config.device, config.embedding_dim)
    else:
        raise AdapterError(f"unknown encoder provider {provider!r}")

    provider, name = _split(config.detector_model)
    if provider == "builtin":
        detector = ContrastDetector()
    elif provider == "yolo":
        detector = load_yolo_detector(name, config.device)
    else:
        raise AdapterError(f"unknown detector provider {provider!r}")

    provider, name = _split(config.chat_model)
    if provider == "builtin":
        chat = EchoChat()
    elif provider == "hf":
        chat = HfChat(name, config.device)
    else:
        raise AdapterError(f"unknown chat provider {provider!r}")
    return encoder, detector, chat
