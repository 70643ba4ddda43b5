"""Multimodal retrieval-augmented generation over structured knowledge units.

A knowledge base of text and images is ingested into knowledge units, each
pairing a matching end (name + images) with a detail end (token-bounded text
chunks). Visual questions retrieve fine-grained evidence through those units
and a two-turn correction chain lets the retrieved knowledge fix or confirm
the model's own answer.
"""

from .backends import (
    BackendConfig,
    ChatTurn,
    MockDetector,
    MockEncoder,
    ScriptedMLLM,
)
from .config import AppConfig
from .evaluation import EvalItem, EvalReport, run_eval, score_answer
from .index import VectorIndex, cosine, unit_normalize
from .passage import AlignedEvidence, MultimodalPassage, align_and_fuse, stitch_passage
from .pipeline import (
    PipelineConfig,
    RetrievedChunkSet,
    RewrittenQuery,
    VisualQuery,
    match_knowledge_units,
    retrieve_chunks,
    rewrite_query,
    select_query_object,
)
from .reasoner import (
    CORRECTION_PROMPT,
    Backends,
    DialogueState,
    answer_query,
    answer_without_kcc,
    corrected_answer,
    initial_answer,
)
from .store import (
    Chunk,
    Document,
    KnowledgeStore,
    KnowledgeUnit,
    StoreConfig,
    segment_passage,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedEvidence",
    "AppConfig",
    "BackendConfig",
    "Backends",
    "ChatTurn",
    "Chunk",
    "CORRECTION_PROMPT",
    "DialogueState",
    "Document",
    "EvalItem",
    "EvalReport",
    "KnowledgeStore",
    "KnowledgeUnit",
    "MockDetector",
    "MockEncoder",
    "MultimodalPassage",
    "PipelineConfig",
    "RetrievedChunkSet",
    "RewrittenQuery",
    "ScriptedMLLM",
    "StoreConfig",
    "VectorIndex",
    "VisualQuery",
    "align_and_fuse",
    "answer_query",
    "answer_without_kcc",
    "corrected_answer",
    "cosine",
    "initial_answer",
    "match_knowledge_units",
    "retrieve_chunks",
    "rewrite_query",
    "run_eval",
    "score_answer",
    "segment_passage",
    "select_query_object",
    "stitch_passage",
    "unit_normalize",
]
