"""Evidence assembly: align retrieved chunks with their units' images and
stitch them into one multimodal passage.

Chunks that resolve to the same image are merged into a single evidence item
with their texts in retrieval-rank order. The passage is structured by
default (explicit multi-image turns); raster mode renders a deterministic
vertical stack into one composite PNG for single-image backends.
"""

from __future__ import annotations

import io
import logging
import textwrap
from dataclasses import dataclass, field
from typing import Callable

from .errors import IntegrityError
from .pipeline import RetrievedChunkSet
from .store import KnowledgeStore

logger = logging.getLogger(__name__)

PANEL_WIDTH = 768
LINE_HEIGHT = 14
MARGIN = 8
WRAP_COLUMNS = 100
PLACEHOLDER_HEIGHT = 96


@dataclass
class AlignedEvidence:
    """One image with the unit name and the chunk texts aligned to it.

    image_id is None for units that carry no images; those still surface as
    text-only items so no retrieved chunk is silently dropped.
    """

    image_id: int | None
    ku_name: str
    texts: list[str] = field(default_factory=list)


@dataclass
class MultimodalPassage:
    items: list[AlignedEvidence]
    raster: bytes | None = None


def align_and_fuse(
    hits: RetrievedChunkSet,
    store: KnowledgeStore,
    preferred_units: list[str] | None = None,
) -> list[AlignedEvidence]:
    """Group hits by the image they align to, merging texts in rank order.

    Each hit resolves to its unit's primary image; hits sharing that image
    merge into one item. Item order follows the retrieval rank of the first
    chunk that produced each item.
    """
    items: dict[object, AlignedEvidence] = {}
    order: list[object] = []
    for hit in hits.hits:
        if hit.chunk_id not in store.chunks:
            raise IntegrityError(f"retrieved chunk {hit.chunk_id} does not resolve")
        if hit.ku_id not in store.units:
            raise IntegrityError(f"retrieved unit {hit.ku_id!r} does not resolve")
        unit = store.units[hit.ku_id]
        if unit.image_ids:
            key: object = unit.image_ids[0]
            image_id: int | None = unit.image_ids[0]
        else:
            key = ("unit", unit.ku_id)
            image_id = None
        if key not in items:
            items[key] = AlignedEvidence(image_id=image_id, ku_name=unit.name)
            order.append(key)
        items[key].texts.append(store.chunks[hit.chunk_id].text)
    return [items[key] for key in order]


def stitch_passage(
    items: list[AlignedEvidence],
    mode: str = "structured",
    image_provider: Callable[[int], bytes] | None = None,
) -> MultimodalPassage:
    """Bundle evidence items into a passage.

    structured keeps the items as explicit multi-image content; raster
    renders them into one composite image (falling back to structured with a
    warning if rendering fails).
    """
    if not items:
        raise ValueError("cannot stitch an empty evidence list")
    if mode == "structured":
        return MultimodalPassage(items=list(items))
    if mode != "raster":
        raise ValueError(f"unknown stitch mode {mode!r}")
    try:
        png = render_raster(items, image_provider)
        return MultimodalPassage(items=list(items), raster=png)
    except Exception:
        logger.warning("raster rendering failed; falling back to structured", exc_info=True)
        return MultimodalPassage(items=list(items))


def render_raster(
    items: list[AlignedEvidence],
    image_provider: Callable[[int], bytes] | None,
) -> bytes:
    """Deterministic vertical stack: each panel is the item's image (scaled
    to a fixed width) above its rendered name and texts."""
    from PIL import Image, ImageDraw, ImageFont

    font = ImageFont.load_default()
    panels: list[Image.Image] = []
    for item in items:
        image = _decode_panel_image(item, image_provider)
        lines = [f"[{item.ku_name}]"]
        for text in item.texts:
            lines.extend(textwrap.wrap(text, WRAP_COLUMNS) or [""])
        text_height = 2 * MARGIN + LINE_HEIGHT * len(lines)
        panel = Image.new("RGB", (PANEL_WIDTH, image.height + text_height), "white")
        panel.paste(image, (0, 0))
        draw = ImageDraw.Draw(panel)
        y = image.height + MARGIN
        for line in lines:
            draw.text((MARGIN, y), line, fill="black", font=font)
            y += LINE_HEIGHT
        panels.append(panel)
    total_height = sum(p.height for p in panels)
    composite = Image.new("RGB", (PANEL_WIDTH, total_height), "white")
    y = 0
    for panel in panels:
        composite.paste(panel, (0, y))
        y += panel.height
    out = io.BytesIO()
    composite.save(out, format="PNG")
    return out.getvalue()


def _decode_panel_image(item, image_provider):
    from PIL import Image

    if item.image_id is not None and image_provider is not None:
        try:
            data = image_provider(item.image_id)
            decoded = Image.open(io.BytesIO(data)).convert("RGB")
            scale = PANEL_WIDTH / decoded.width
            return decoded.resize((PANEL_WIDTH, max(1, round(decoded.height * scale))))
        except Exception:
            logger.debug("panel image %s not decodable; using placeholder", item.image_id)
    return Image.new("RGB", (PANEL_WIDTH, PLACEHOLDER_HEIGHT), (225, 225, 225))
