"""Evaluation harness: exact-match accuracy over JSONL datasets.

Every mode consumes identical items and backend configs; only the pipeline
stage under ablation differs, which is what makes the mode comparisons in a
report meaningful. With deterministic backends two runs of the same dataset
produce byte-identical reports.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import CorpusFormatError
from .pipeline import PipelineConfig, VisualQuery
from .reasoner import Backends, answer_query
from .store import KnowledgeStore, resolve_image_ref

logger = logging.getLogger(__name__)

_ARTICLES = ("a", "an", "the")
_PUNCT_RE = re.compile(r"[^\w\s]")


@dataclass
class EvalItem:
    item_id: str
    question: str
    gold_answers: list[str]
    image_ref: str | None = None

    def __post_init__(self):
        if not self.gold_answers:
            raise ValueError(f"eval item {self.item_id!r} has no gold answers")


@dataclass
class ItemResult:
    item_id: str
    predicted: str
    matched_gold: str
    correct: bool
    error: str | None = None


@dataclass
class EvalReport:
    mode: str
    n: int
    accuracy: float
    per_item: list[ItemResult] = field(default_factory=list)
    empty: bool = False

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "accuracy": self.accuracy,
            "empty": self.empty,
            "per_item": [
                {
                    "item_id": r.item_id,
                    "predicted": r.predicted,
                    "matched_gold": r.matched_gold,
                    "correct": r.correct,
                    "error": r.error,
                }
                for r in self.per_item
            ],
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace, strip leading articles."""
    words = _PUNCT_RE.sub(" ", text.lower()).split()
    while words and words[0] in _ARTICLES:
        words.pop(0)
    return " ".join(words)


def score_answer(predicted: str, golds: list[str]) -> bool:
    """Exact match after normalization against any gold alias."""
    if not golds:
        raise ValueError("golds must be non-empty")
    normalized = normalize_answer(predicted)
    return any(normalized == normalize_answer(g) for g in golds)


def load_eval_jsonl(path: str, base_dir: str | None = None) -> list[EvalItem]:
    """Parse a JSONL dataset of {item_id, image, question, gold_answers}."""
    items: list[EvalItem] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc.msg}", line_no) from exc
            try:
                items.append(
                    EvalItem(
                        item_id=str(raw["item_id"]),
                        question=str(raw["question"]),
                        gold_answers=[str(g) for g in raw["gold_answers"]],
                        image_ref=str(raw["image"]) if raw.get("image") is not None else None,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"bad eval item: {exc}", line_no) from exc
    return items


def run_eval(
    dataset: list[EvalItem],
    mode: str,
    store: KnowledgeStore,
    backends: Backends,
    config: PipelineConfig | None = None,
    workers: int = 1,
    passage_mode: str = "structured",
    image_base_dir: str | None = None,
) -> EvalReport:
    """Answer every item in the given mode and score the finals.

    Per-item failures are recorded as incorrect with an error note and the
    run continues. Results are assembled order-independently and sorted by
    item id, so worker count never changes the report.
    """
    if not dataset:
        return EvalReport(mode=mode, n=0, accuracy=0.0, per_item=[], empty=True)

    def evaluate(item: EvalItem) -> ItemResult:
        try:
            image = (
                resolve_image_ref(item.image_ref, image_base_dir)
                if item.image_ref is not None
                else None
            )
            state = answer_query(
                VisualQuery(text=item.question, image=image),
                store,
                backends,
                config=config,
                mode=mode,
                passage_mode=passage_mode,
            )
            predicted = state.final_answer
        except Exception as exc:
            logger.warning("item %s failed: %s", item.item_id, exc)
            return ItemResult(
                item_id=item.item_id, predicted="", matched_gold="",
                correct=False, error=f"{type(exc).__name__}: {exc}",
            )
        matched = ""
        normalized = normalize_answer(predicted)
        for gold in item.gold_answers:
            if normalized == normalize_answer(gold):
                matched = gold
                break
        return ItemResult(
            item_id=item.item_id,
            predicted=predicted,
            matched_gold=matched,
            correct=bool(matched),
        )

    if workers <= 1:
        results = [evaluate(item) for item in dataset]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, dataset))
    results.sort(key=lambda r: r.item_id)
    correct = sum(1 for r in results if r.correct)
    return EvalReport(
        mode=mode,
        n=len(results),
        accuracy=correct / len(results),
        per_item=results,
    )
