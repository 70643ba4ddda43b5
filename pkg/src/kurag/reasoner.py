"""Answer generation: the two-turn correction chain and its ablations.

The default protocol asks the model the bare question first (no retrieved
content), then sends the multimodal evidence passage with a fixed
correction-aware prompt so the retrieved knowledge can correct or confirm
that initial answer. Ablation modes swap this for a single-turn exchange or
replace unit-scoped retrieval with caption-based text retrieval.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from .backends.base import ChatTurn
from .errors import KuragError
from .passage import AlignedEvidence, MultimodalPassage, align_and_fuse, stitch_passage
from .pipeline import (
    PipelineConfig,
    VisualQuery,
    combined_detail_ids,
    match_knowledge_units,
    retrieve_chunks,
    rewrite_query,
    select_query_object,
)
from .store import KnowledgeStore

logger = logging.getLogger(__name__)

MODES = ("kurag", "no_kcc", "no_ku")

#: Fixed correction-aware prompt sent with the evidence turn.
CORRECTION_PROMPT = (
    "The initial answer has already been provided. The new image information "
    "may either be related or unrelated to the previous input. If this new "
    "information conflicts with the initial answer, please update the "
    "response accordingly. If no changes are needed, simply output the "
    "initial answer again."
)

#: Rejected single-turn guidance variants, kept for ablation parity only.
GUIDANCE_OWN_KNOWLEDGE = (
    "Based on your own knowledge first, then consult the provided material "
    "only if it corrects you."
)
GUIDANCE_FOCUS_FIRST_IMAGE = (
    "Focus on the first image and ignore other image content unless it is "
    "directly relevant to the question."
)

CAPTION_PROMPT = "Describe the image in one short caption."


class StageError(KuragError):
    """Wraps a pipeline failure with the stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class TranscriptTurn:
    role: str
    text: str
    image_refs: list[str] = field(default_factory=list)


@dataclass
class DialogueState:
    """Everything observable about one answered query."""

    question: VisualQuery
    mode: str = "kurag"
    initial_answer: str | None = None
    final_answer: str = ""
    transcript: list[TranscriptTurn] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    _history: list[ChatTurn] = field(default_factory=list, repr=False)

    def record(self, role: str, text: str, images: list[tuple[str, bytes]] = ()) -> None:
        self._history.append(
            ChatTurn(role=role, text=text, images=tuple(data for _, data in images))
        )
        self.transcript.append(
            TranscriptTurn(role=role, text=text, image_refs=[ref for ref, _ in images])
        )

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.diagnostics.setdefault("warnings", []).append(message)

    def to_dict(self) -> dict:
        return {
            "question": {"text": self.question.text, "has_image": self.question.image is not None},
            "mode": self.mode,
            "initial_answer": self.initial_answer,
            "final_answer": self.final_answer,
            "transcript": [
                {"role": t.role, "text": t.text, "images": t.image_refs}
                for t in self.transcript
            ],
            "diagnostics": self.diagnostics,
        }


def initial_answer(query: VisualQuery, mllm, state: DialogueState | None = None) -> str:
    """First turn: the bare question with its image, nothing retrieved."""
    state = state if state is not None else DialogueState(question=query)
    images = [("query", query.image)] if query.image is not None else []
    state.record("user", query.text, images)
    reply = mllm.chat(state._history)
    state.record("assistant", reply)
    state.initial_answer = reply
    return reply


def _evidence_text(items: list[AlignedEvidence]) -> str:
    return "\n".join(f"[{item.ku_name}] " + " ".join(item.texts) for item in items)


def _evidence_images(
    mp: MultimodalPassage, image_provider
) -> list[tuple[str, bytes]]:
    if mp.raster is not None:
        return [("raster", mp.raster)]
    images = []
    for item in mp.items:
        if item.image_id is None or image_provider is None:
            continue
        try:
            images.append((f"image:{item.image_id}", image_provider(item.image_id)))
        except Exception:
            logger.warning("could not load image %s for the evidence turn", item.image_id)
    return images


def corrected_answer(
    state: DialogueState,
    mp: MultimodalPassage,
    mllm,
    image_provider=None,
) -> str:
    """Second turn: evidence passage plus the correction prompt.

    An empty passage degrades to returning the initial answer with a warning
    instead of sending the model an evidence-free correction turn.
    """
    if state.initial_answer is None:
        raise ValueError("corrected_answer requires an initial answer")
    if not mp.items:
        state.warn("empty evidence passage; keeping the initial answer")
        state.final_answer = state.initial_answer
        return state.final_answer
    text = _evidence_text(mp.items) + "\n\n" + CORRECTION_PROMPT
    state.record("user", text, _evidence_images(mp, image_provider))
    reply = mllm.chat(state._history)
    state.record("assistant", reply)
    state.final_answer = reply
    return reply


def answer_without_kcc(
    query: VisualQuery,
    mp: MultimodalPassage,
    mllm,
    state: DialogueState | None = None,
    image_provider=None,
) -> str:
    """Single-turn ablation: question and evidence together, no initial pass."""
    state = state if state is not None else DialogueState(question=query, mode="no_kcc")
    images = [("query", query.image)] if query.image is not None else []
    images += _evidence_images(mp, image_provider)
    text = query.text
    if mp.items:
        text = query.text + "\n\n" + _evidence_text(mp.items)
    state.record("user", text, images)
    reply = mllm.chat(state._history)
    state.record("assistant", reply)
    state.final_answer = reply
    return reply


def guided_single_turn_answer(
    query: VisualQuery,
    mp: MultimodalPassage,
    mllm,
    image_provider=None,
) -> DialogueState:
    """Experimental: the rejected guidance-prompt variant, for comparisons."""
    state = DialogueState(question=query, mode="guided_single_turn")
    guidance = f"{GUIDANCE_OWN_KNOWLEDGE} {GUIDANCE_FOCUS_FIRST_IMAGE}"
    images = [("query", query.image)] if query.image is not None else []
    images += _evidence_images(mp, image_provider)
    text = guidance + "\n\n" + query.text
    if mp.items:
        text += "\n\n" + _evidence_text(mp.items)
    state.record("user", text, images)
    reply = mllm.chat(state._history)
    state.record("assistant", reply)
    state.final_answer = reply
    return state


@dataclass
class Backends:
    encoder: object
    detector: object
    mllm: object


@contextmanager
def _timed(state: DialogueState, stage: str):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc
    finally:
        state.diagnostics.setdefault("timings", {})[stage] = round(
            time.perf_counter() - start, 6
        )


def answer_query(
    query: VisualQuery,
    store: KnowledgeStore,
    backends: Backends,
    config: PipelineConfig | None = None,
    mode: str = "kurag",
    passage_mode: str = "structured",
) -> DialogueState:
    """Run the full pipeline for one query in the requested mode.

    kurag: object gating, unit matching, query rewrite, unit-scoped chunk
    retrieval, evidence assembly, then the two-turn correction chain.
    no_kcc: identical retrieval, single-turn answer generation.
    no_ku: caption the query image, retrieve from the chunk index with
    caption+question text (no unit scoping), then the correction chain.

    Stage failures raise StageError and leave the failing stage's name in
    the state's diagnostics.
    """
    config = config or PipelineConfig()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    state = DialogueState(question=query, mode=mode)
    state.diagnostics["mode"] = mode
    try:
        if mode in ("kurag", "no_kcc"):
            mp = _retrieve_with_units(query, store, backends, config, state, passage_mode)
        else:
            mp = _retrieve_with_captions(query, store, backends, config, state, passage_mode)
        with _timed(state, "reason"):
            if mode == "no_kcc":
                answer_without_kcc(query, mp, backends.mllm, state, store.image_bytes)
            else:
                initial_answer(query, backends.mllm, state)
                corrected_answer(state, mp, backends.mllm, store.image_bytes)
    except StageError as exc:
        state.diagnostics["failed_stage"] = exc.stage
        raise
    return state


def _retrieve_with_units(
    query: VisualQuery,
    store: KnowledgeStore,
    backends: Backends,
    config: PipelineConfig,
    state: DialogueState,
    passage_mode: str,
) -> MultimodalPassage:
    with _timed(state, "select_object"):
        query_vec = select_query_object(query, backends.detector, backends.encoder, config.gamma)
    with _timed(state, "match_units"):
        ranked = match_knowledge_units(store, query_vec, config.ku_topk)
        state.diagnostics["matched_units"] = [
            {"ku_id": ku_id, "score": round(score, 6)} for ku_id, score in ranked
        ]
    if not ranked:
        state.warn("no knowledge units matched; degrading to text-only retrieval")
        return _text_only_passage(query.text, store, backends, config, state, passage_mode)
    with _timed(state, "rewrite"):
        top_name = store.lookup_unit(ranked[0][0]).name
        rewritten = rewrite_query(query.text, top_name)
        state.diagnostics["rewritten_query"] = rewritten.rewritten
    with _timed(state, "retrieve"):
        candidates = combined_detail_ids(store, ranked)
        hits = retrieve_chunks(
            store,
            rewritten,
            candidates,
            config.chunk_topk,
            backends.encoder,
            ranked_units=ranked,
            use_raw_query_vector=config.use_raw_query_vector,
        )
        state.diagnostics["hits"] = [
            {"chunk_id": h.chunk_id, "ku_id": h.ku_id, "score": round(h.score, 6)}
            for h in hits.hits
        ]
    with _timed(state, "assemble"):
        items = align_and_fuse(hits, store, preferred_units=[k for k, _ in ranked])
        return stitch_passage(items, mode=passage_mode, image_provider=store.image_bytes)


def _retrieve_with_captions(
    query: VisualQuery,
    store: KnowledgeStore,
    backends: Backends,
    config: PipelineConfig,
    state: DialogueState,
    passage_mode: str,
) -> MultimodalPassage:
    with _timed(state, "caption"):
        caption = ""
        if query.image is not None:
            caption = backends.mllm.chat(
                [ChatTurn(role="user", text=CAPTION_PROMPT, images=(query.image,))]
            )
        state.diagnostics["caption"] = caption
    retrieval_text = f"{caption} {query.text}".strip()
    return _text_only_passage(retrieval_text, store, backends, config, state, passage_mode)


def _text_only_passage(
    retrieval_text: str,
    store: KnowledgeStore,
    backends: Backends,
    config: PipelineConfig,
    state: DialogueState,
    passage_mode: str,
) -> MultimodalPassage:
    """Unit-free retrieval straight from the chunk index, grouped by source
    document. Serves the caption ablation and the no-units degradation."""
    with _timed(state, "retrieve"):
        query_vec = backends.encoder.embed_text(retrieval_text)
        scored = store.chunk_index.search_topk(query_vec, config.chunk_topk)
        state.diagnostics["hits"] = [
            {"chunk_id": h.entry_id, "score": round(h.score, 6)} for h in scored
        ]
    if not scored:
        state.warn("text-only retrieval found no chunks")
        return MultimodalPassage(items=[])
    with _timed(state, "assemble"):
        items: list[AlignedEvidence] = []
        by_doc: dict[str, AlignedEvidence] = {}
        for hit in scored:
            chunk = store.lookup_chunk(hit.entry_id)
            doc = store.documents.get(chunk.doc_id)
            label = (doc.title if doc and doc.title else chunk.doc_id)
            if chunk.doc_id not in by_doc:
                by_doc[chunk.doc_id] = AlignedEvidence(image_id=None, ku_name=label)
                items.append(by_doc[chunk.doc_id])
            by_doc[chunk.doc_id].texts.append(chunk.text)
        return stitch_passage(items, mode=passage_mode, image_provider=store.image_bytes)
