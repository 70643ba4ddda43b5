"""Query pipeline: from a visual question to ranked evidence chunks.

Four stages: gate the query image down to a single relevant object crop (or
fall back to the whole image), match knowledge units by image similarity,
rewrite the question with the top unit's name and its content words, then
rank only the matched units' chunks against the rewritten query vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError
from .index import cosine
from .store import KnowledgeStore
from .text import content_words

logger = logging.getLogger(__name__)

SEP_TOKEN = "[SEP]"


@dataclass
class VisualQuery:
    """A user question: image bytes plus the text asking about it.

    The image may be omitted only when running the text-only ablation, where
    retrieval works from a caption instead of the image itself.
    """

    text: str
    image: bytes | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass
class RewrittenQuery:
    raw: str
    rewritten: str
    keywords: list[str]


@dataclass
class PipelineConfig:
    gamma: float = 0.25
    ku_topk: int = 3
    chunk_topk: int = 3
    use_raw_query_vector: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.ku_topk < 1 or self.chunk_topk < 1:
            raise ValueError("top-k values must be >= 1")


@dataclass
class ChunkHit:
    chunk_id: int
    ku_id: str
    score: float


@dataclass
class RetrievedChunkSet:
    hits: list[ChunkHit] = field(default_factory=list)


def select_query_object(
    query: VisualQuery,
    detector,
    encoder,
    gamma: float,
) -> np.ndarray:
    """Embedding used for unit matching: one gated object crop or the image.

    Each detected crop is embedded and scored against the question text; the
    crop wins only when it is the single detection above gamma. Zero or
    several detections above the threshold mean the question concerns the
    wider scene, so the whole image is embedded instead. Detector failures
    degrade to the whole image with a warning rather than failing the query.
    """
    if query.image is None:
        raise ValueError("select_query_object requires a query image")
    try:
        detections = detector.detect(query.image)
    except Exception:
        logger.warning("detector failed; falling back to whole-image embedding", exc_info=True)
        detections = []
    if detections:
        text_vec = encoder.embed_text(query.text)
        crop_vecs = [encoder.embed_image(d.crop) for d in detections]
        scores = [cosine(text_vec, v) for v in crop_vecs]
        above = [i for i, s in enumerate(scores) if s > gamma]
        if len(above) == 1:
            return crop_vecs[above[0]]
    return encoder.embed_image(query.image)


def match_knowledge_units(
    store: KnowledgeStore,
    query_image_vec: np.ndarray,
    ku_topk: int,
) -> list[tuple[str, float]]:
    """Rank knowledge units against the query image vector.

    A unit's score is the max cosine over its matching-end image vectors;
    units without images cannot be matched visually and are skipped. Returns
    up to ku_topk (unit id, score) pairs, ties broken by ascending unit id.
    An empty image index yields an empty list so callers can degrade.
    """
    if len(store.image_index) == 0:
        return []
    image_scores = {
        hit.entry_id: hit.score
        for hit in store.image_index.search_topk(query_image_vec, k=len(store.image_index))
    }
    scored: list[tuple[str, float]] = []
    for ku_id in sorted(store.units):
        unit = store.units[ku_id]
        if not unit.image_ids:
            continue
        scored.append((ku_id, max(image_scores[iid] for iid in unit.image_ids)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:ku_topk]


def combined_detail_ids(store: KnowledgeStore, ranked_units: list[tuple[str, float]]) -> list[int]:
    """Detail-end chunk ids of the ranked units, concatenated in rank order
    with first occurrence kept on duplicates."""
    seen: set[int] = set()
    out: list[int] = []
    for ku_id, _ in ranked_units:
        for cid in store.lookup_unit(ku_id).chunk_ids:
            if cid not in seen:
                seen.add(cid)
                out.append(cid)
    return out


def rewrite_query(question: str, top_unit_name: str) -> RewrittenQuery:
    """Append the top unit's name and the question's content words.

    The rewritten form is ``<question> [SEP] <unit name> [SEP] <keywords>``
    with keywords comma-joined; an all-stopword question leaves the third
    segment empty.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    keywords = content_words(question)
    rewritten = f"{question} {SEP_TOKEN} {top_unit_name} {SEP_TOKEN} {', '.join(keywords)}"
    return RewrittenQuery(raw=question, rewritten=rewritten, keywords=keywords)


def retrieve_chunks(
    store: KnowledgeStore,
    rewritten: RewrittenQuery,
    candidate_ids: list[int],
    chunk_topk: int,
    encoder,
    ranked_units: list[tuple[str, float]] | None = None,
    use_raw_query_vector: bool = False,
) -> RetrievedChunkSet:
    """Rank only the candidate chunk ids against the query vector.

    Scoping to the matched units' detail ends is the point of this stage: a
    chunk outside candidate_ids can never be returned. The query embeds the
    rewritten string by default; use_raw_query_vector switches to the
    original question text.
    """
    if not candidate_ids:
        raise ValueError("candidate_ids must be non-empty")
    missing = [cid for cid in candidate_ids if cid not in store.chunks]
    if missing:
        raise IntegrityError(f"candidate chunk ids do not resolve: {missing[:5]}")
    query_text = rewritten.raw if use_raw_query_vector else rewritten.rewritten
    query_vec = encoder.embed_text(query_text)
    ranked = store.chunk_index.scores_for(query_vec, candidate_ids)[:chunk_topk]
    preferred = [ku_id for ku_id, _ in ranked_units] if ranked_units else None
    hits = [
        ChunkHit(
            chunk_id=hit.entry_id,
            ku_id=store.unit_for_chunk(hit.entry_id, preferred=preferred).ku_id,
            score=hit.score,
        )
        for hit in ranked
    ]
    return RetrievedChunkSet(hits=hits)
