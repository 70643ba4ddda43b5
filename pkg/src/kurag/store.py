"""Knowledge store: segmentation, unit assembly, and database-level CRUD.

Raw documents are split into token-bounded sentence chunks, embedded into the
chunk vector index, and assembled into knowledge units. A unit couples a
matching end (name + images, used to link queries to the unit) with a detail
end (the ordered chunk ids that carry its text knowledge). Units whose detail
end empties out are pruned together with their image vectors.

Mutations are serialized behind a single writer lock; concurrent reads are
safe with each other but not with an in-flight write.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    ConfigError,
    CorpusFormatError,
    DuplicateDocumentError,
    IntegrityError,
    NotFoundError,
    StoreError,
)
from .index import VectorIndex, cosine
from .text import candidate_names, count_tokens, name_similarity, slugify, split_sentences, tokenize

logger = logging.getLogger(__name__)

STORE_FORMAT_VERSION = 1
KU_KINDS = ("entity", "event", "rule", "topic", "other")


@dataclass
class StoreConfig:
    max_chunk_tokens: int = 200
    alpha: float = 0.85
    embedding_dim: int = 512

    def __post_init__(self):
        if self.max_chunk_tokens < 1:
            raise ConfigError("max_chunk_tokens must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "StoreConfig":
        unknown = set(raw) - {"max_chunk_tokens", "alpha", "embedding_dim"}
        if unknown:
            raise ConfigError(f"unknown store config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class Document:
    doc_id: str
    title: str = ""
    body: str = ""
    image_refs: list[str] = field(default_factory=list)
    ku_kind: str = "entity"
    ku_names: list[str] | None = None

    def __post_init__(self):
        if self.ku_kind not in KU_KINDS:
            raise StoreError(f"unknown ku_kind {self.ku_kind!r} for {self.doc_id!r}")
        if not self.body.strip() and not self.image_refs:
            raise StoreError(f"document {self.doc_id!r} has neither text nor images")


@dataclass
class Chunk:
    chunk_id: int
    doc_id: str
    sentences: list[str]
    token_count: int
    oversized_flag: bool = False

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass
class KnowledgeUnit:
    ku_id: str
    name: str
    image_ids: list[int] = field(default_factory=list)
    chunk_ids: list[int] = field(default_factory=list)
    kind: str = "entity"


@dataclass
class ImageRecord:
    image_id: int
    doc_id: str
    ref: str


@dataclass
class KuMutation:
    """Audit record for one unit-level change during ingestion."""

    action: str  # "created" | "appended"
    ku_id: str
    name: str
    added_chunk_ids: list[int]
    added_image_ids: list[int] = field(default_factory=list)
    match_score: float | None = None


def segment_passage(
    body: str,
    max_tokens: int,
    start_id: int = 0,
    doc_id: str = "",
    token_counter: Callable[[str], int] = count_tokens,
) -> list[Chunk]:
    """Greedy sentence packing: each chunk takes the longest prefix of the
    remaining sentences that stays within max_tokens.

    A single sentence longer than max_tokens becomes its own chunk with the
    oversized flag set; it is kept whole and only truncated at embedding time
    so the stored knowledge stays coherent.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    sentences = split_sentences(body)
    chunks: list[Chunk] = []
    current: list[str] = []
    current_tokens = 0

    def flush():
        nonlocal current, current_tokens
        if current:
            chunks.append(
                Chunk(
                    chunk_id=start_id + len(chunks),
                    doc_id=doc_id,
                    sentences=current,
                    token_count=current_tokens,
                )
            )
            current = []
            current_tokens = 0

    for sentence in sentences:
        n = token_counter(sentence)
        if n > max_tokens:
            flush()
            chunks.append(
                Chunk(
                    chunk_id=start_id + len(chunks),
                    doc_id=doc_id,
                    sentences=[sentence],
                    token_count=n,
                    oversized_flag=True,
                )
            )
            continue
        if current and current_tokens + n > max_tokens:
            flush()
        current.append(sentence)
        current_tokens += n
    flush()
    return chunks


def resolve_image_ref(ref: str, base_dir: str | None = None) -> bytes:
    """Bytes for an image reference.

    Existing file paths are read from disk, http(s) URLs are fetched, and
    anything else falls back to the reference string's own bytes — which is
    what makes marker-string corpora work against the mock encoder.
    """
    candidate = Path(ref)
    if base_dir and not candidate.is_absolute():
        based = Path(base_dir) / ref
        if based.exists():
            return based.read_bytes()
    if candidate.exists() and candidate.is_file():
        return candidate.read_bytes()
    if ref.startswith(("http://", "https://")):
        import httpx

        response = httpx.get(ref, timeout=30.0)
        response.raise_for_status()
        return response.content
    return ref.encode("utf-8")


class KnowledgeStore:
    """Documents, chunks, knowledge units, and their two vector indexes."""

    def __init__(
        self,
        encoder,
        config: StoreConfig | None = None,
        image_loader: Callable[[str], bytes] = resolve_image_ref,
    ):
        self.config = config or StoreConfig()
        if encoder.dim() != self.config.embedding_dim:
            raise ConfigError(
                f"encoder dim {encoder.dim()} != configured embedding_dim "
                f"{self.config.embedding_dim}"
            )
        self.encoder = encoder
        self.image_loader = image_loader
        self.chunk_index = VectorIndex(self.config.embedding_dim)
        self.image_index = VectorIndex(self.config.embedding_dim)
        self.documents: dict[str, Document] = {}
        self.chunks: dict[int, Chunk] = {}
        self.units: dict[str, KnowledgeUnit] = {}
        self.images: dict[int, ImageRecord] = {}
        self._next_chunk_id = 0
        self._next_image_id = 0
        self._slug_counts: dict[str, int] = {}
        self._lock = threading.RLock()

    # --- ingestion -----------------------------------------------------------

    def ingest_document(self, doc: Document) -> tuple[list[Chunk], list[KuMutation]]:
        """Chunk, embed, and assemble a document into knowledge units.

        Returns the created chunks and the unit mutations applied, for audit.
        Explicit doc.ku_names bypass the name heuristics; each explicit name
        (and the title candidate) claims every chunk of the document, while
        heuristic body-span candidates claim only the chunks mentioning them.
        """
        with self._lock:
            if doc.doc_id in self.documents:
                raise DuplicateDocumentError(f"document {doc.doc_id!r} already ingested")

            chunks = segment_passage(
                doc.body, self.config.max_chunk_tokens,
                start_id=self._next_chunk_id, doc_id=doc.doc_id,
            )
            for chunk in chunks:
                self.chunk_index.insert(chunk.chunk_id, self._embed_chunk(chunk))
                self.chunks[chunk.chunk_id] = chunk
            if chunks:
                self._next_chunk_id = chunks[-1].chunk_id + 1

            new_image_ids: list[int] = []
            image_vectors: list[np.ndarray] = []
            for ref in doc.image_refs:
                vec = self.encoder.embed_image(self.image_loader(ref))
                image_id = self._next_image_id
                self._next_image_id += 1
                self.image_index.insert(image_id, vec)
                self.images[image_id] = ImageRecord(image_id=image_id, doc_id=doc.doc_id, ref=ref)
                new_image_ids.append(image_id)
                image_vectors.append(vec)

            self.documents[doc.doc_id] = doc

            mutations: list[KuMutation] = []
            all_chunk_ids = [c.chunk_id for c in chunks]
            if all_chunk_ids:
                if doc.ku_names is not None:
                    # explicit names are structural: the whole document is
                    # about each of them
                    candidates = [(name, True) for name in doc.ku_names]
                else:
                    names = candidate_names(doc.title, doc.body)
                    has_title = bool(doc.title.strip())
                    candidates = [
                        (name, has_title and position == 0)
                        for position, name in enumerate(names)
                    ]
                for position, (name, structural) in enumerate(candidates):
                    if structural:
                        claimed = all_chunk_ids
                    else:
                        lowered = name.casefold()
                        claimed = [
                            c.chunk_id for c in chunks if lowered in c.text.casefold()
                        ]
                    if not claimed:
                        continue
                    match_vec = image_vectors[0] if (position == 0 and image_vectors) else None
                    mutation = self.link_or_create_unit(
                        name, match_vec, claimed, kind=doc.ku_kind
                    )
                    if position == 0 and new_image_ids:
                        unit = self.units[mutation.ku_id]
                        unit.image_ids.extend(new_image_ids)
                        mutation.added_image_ids = list(new_image_ids)
                    mutations.append(mutation)
            return chunks, mutations

    def _embed_chunk(self, chunk: Chunk) -> np.ndarray:
        text = chunk.text
        if chunk.oversized_flag:
            text = " ".join(tokenize(text)[: self.config.max_chunk_tokens])
        return self.encoder.embed_text(text)

    def link_or_create_unit(
        self,
        candidate_name: str,
        candidate_image_vec: np.ndarray | None,
        new_chunk_ids: list[int],
        kind: str = "entity",
    ) -> KuMutation:
        """Append chunks to the best-matching unit, or create a fresh one.

        The match score against each stored unit is the max of name-string
        similarity and image cosine (when a candidate image vector and unit
        images are both available); a best score >= alpha appends, anything
        lower creates a new unit keyed by a slug of the name.
        """
        if not new_chunk_ids:
            raise ValueError("new_chunk_ids must be non-empty")
        with self._lock:
            best_unit: KnowledgeUnit | None = None
            best_score = -1.0
            for ku_id in sorted(self.units):
                unit = self.units[ku_id]
                score = name_similarity(candidate_name, unit.name)
                if candidate_image_vec is not None and unit.image_ids:
                    image_score = max(
                        cosine(candidate_image_vec, self.image_index.vector(iid))
                        for iid in unit.image_ids
                    )
                    score = max(score, image_score)
                if score > best_score:
                    best_score = score
                    best_unit = unit
            if best_unit is not None and best_score >= self.config.alpha:
                added = [cid for cid in new_chunk_ids if cid not in best_unit.chunk_ids]
                best_unit.chunk_ids.extend(added)
                return KuMutation(
                    action="appended",
                    ku_id=best_unit.ku_id,
                    name=best_unit.name,
                    added_chunk_ids=added,
                    match_score=best_score,
                )
            slug = slugify(candidate_name)
            self._slug_counts[slug] = self._slug_counts.get(slug, 0) + 1
            count = self._slug_counts[slug]
            ku_id = slug if count == 1 else f"{slug}-{count}"
            self.units[ku_id] = KnowledgeUnit(
                ku_id=ku_id,
                name=candidate_name,
                chunk_ids=list(new_chunk_ids),
                kind=kind,
            )
            return KuMutation(
                action="created",
                ku_id=ku_id,
                name=candidate_name,
                added_chunk_ids=list(new_chunk_ids),
                match_score=best_score if best_score >= 0 else None,
            )

    # --- deletion -------------------------------------------------------------

    def delete_chunk_and_prune(self, chunk_id: int) -> list[str]:
        """Remove one chunk everywhere; delete units left with an empty
        detail end and drop their image vectors. Returns deleted unit ids.

        When the chunk was its document's last one, that document's images
        (and its registration) are dropped as well, so deleting all of a
        document's chunks leaves the store as if it had never been ingested.
        """
        with self._lock:
            if chunk_id not in self.chunks:
                raise NotFoundError(f"chunk {chunk_id} does not exist")
            doc_id = self.chunks[chunk_id].doc_id
            del self.chunks[chunk_id]
            self.chunk_index.remove(chunk_id)
            if not any(c.doc_id == doc_id for c in self.chunks.values()):
                self._collect_document(doc_id)
            deleted: list[str] = []
            for ku_id in sorted(self.units):
                unit = self.units[ku_id]
                if chunk_id not in unit.chunk_ids:
                    continue
                unit.chunk_ids = [cid for cid in unit.chunk_ids if cid != chunk_id]
                if unit.chunk_ids:
                    continue
                for image_id in unit.image_ids:
                    if image_id in self.image_index:
                        self.image_index.remove(image_id)
                    self.images.pop(image_id, None)
                del self.units[ku_id]
                deleted.append(ku_id)
            return deleted

    def _collect_document(self, doc_id: str) -> None:
        """Drop a text-bearing document whose chunks are all gone: its image
        vectors leave the image index and every unit's matching end."""
        doc_image_ids = [i for i, rec in self.images.items() if rec.doc_id == doc_id]
        for image_id in doc_image_ids:
            self.image_index.remove(image_id)
            del self.images[image_id]
        if doc_image_ids:
            gone = set(doc_image_ids)
            for unit in self.units.values():
                unit.image_ids = [i for i in unit.image_ids if i not in gone]
        self.documents.pop(doc_id, None)

    # --- lookups ----------------------------------------------------------------

    def lookup_unit(self, ku_id: str) -> KnowledgeUnit:
        try:
            return self.units[ku_id]
        except KeyError:
            raise NotFoundError(f"knowledge unit {ku_id!r} does not exist") from None

    def lookup_chunk(self, chunk_id: int) -> Chunk:
        try:
            return self.chunks[chunk_id]
        except KeyError:
            raise NotFoundError(f"chunk {chunk_id} does not exist") from None

    def image_bytes(self, image_id: int) -> bytes:
        try:
            record = self.images[image_id]
        except KeyError:
            raise NotFoundError(f"image {image_id} does not exist") from None
        return self.image_loader(record.ref)

    def unit_for_chunk(self, chunk_id: int, preferred: list[str] | None = None) -> KnowledgeUnit:
        """The unit owning a chunk, preferring ids listed in `preferred`."""
        if preferred:
            for ku_id in preferred:
                unit = self.units.get(ku_id)
                if unit and chunk_id in unit.chunk_ids:
                    return unit
        for ku_id in sorted(self.units):
            if chunk_id in self.units[ku_id].chunk_ids:
                return self.units[ku_id]
        raise IntegrityError(f"chunk {chunk_id} belongs to no knowledge unit")

    def stats(self) -> dict:
        return {
            "documents": len(self.documents),
            "chunks": len(self.chunks),
            "units": len(self.units),
            "chunk_vectors": len(self.chunk_index),
            "image_vectors": len(self.image_index),
        }

    def check_integrity(self) -> None:
        """Raise IntegrityError if any unit invariant is broken."""
        for unit in self.units.values():
            if not unit.chunk_ids:
                raise IntegrityError(f"unit {unit.ku_id} has an empty detail end")
            for cid in unit.chunk_ids:
                if cid not in self.chunks:
                    raise IntegrityError(f"unit {unit.ku_id} references missing chunk {cid}")
            for iid in unit.image_ids:
                if iid not in self.image_index:
                    raise IntegrityError(f"unit {unit.ku_id} references missing image {iid}")

    # --- persistence --------------------------------------------------------------

    def save(self, directory: str) -> None:
        with self._lock:
            os.makedirs(directory, exist_ok=True)
            manifest = {
                "format_version": STORE_FORMAT_VERSION,
                "config": {
                    "max_chunk_tokens": self.config.max_chunk_tokens,
                    "alpha": self.config.alpha,
                    "embedding_dim": self.config.embedding_dim,
                },
                "documents": [
                    {
                        "doc_id": d.doc_id,
                        "title": d.title,
                        "body": d.body,
                        "image_refs": d.image_refs,
                        "ku_kind": d.ku_kind,
                        "ku_names": d.ku_names,
                    }
                    for d in self.documents.values()
                ],
                "chunks": [
                    {
                        "chunk_id": c.chunk_id,
                        "doc_id": c.doc_id,
                        "sentences": c.sentences,
                        "token_count": c.token_count,
                        "oversized_flag": c.oversized_flag,
                    }
                    for c in self.chunks.values()
                ],
                "units": [
                    {
                        "ku_id": u.ku_id,
                        "name": u.name,
                        "image_ids": u.image_ids,
                        "chunk_ids": u.chunk_ids,
                        "kind": u.kind,
                    }
                    for u in self.units.values()
                ],
                "images": [
                    {"image_id": i.image_id, "doc_id": i.doc_id, "ref": i.ref}
                    for i in self.images.values()
                ],
                "next_chunk_id": self._next_chunk_id,
                "next_image_id": self._next_image_id,
                "slug_counts": self._slug_counts,
            }
            tmp = os.path.join(directory, "store.json.tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, sort_keys=True)
            os.replace(tmp, os.path.join(directory, "store.json"))
            self.chunk_index.persist(os.path.join(directory, "chunks"))
            self.image_index.persist(os.path.join(directory, "images"))

    @classmethod
    def load(
        cls,
        directory: str,
        encoder,
        image_loader: Callable[[str], bytes] = resolve_image_ref,
    ) -> "KnowledgeStore":
        manifest_path = os.path.join(directory, "store.json")
        if not os.path.exists(manifest_path):
            raise NotFoundError(f"no store manifest at {manifest_path}")
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format_version") != STORE_FORMAT_VERSION:
            raise StoreError(
                f"unsupported store format_version {manifest.get('format_version')}"
            )
        store = cls(
            encoder,
            config=StoreConfig.from_dict(manifest["config"]),
            image_loader=image_loader,
        )
        for raw in manifest["documents"]:
            store.documents[raw["doc_id"]] = Document(
                doc_id=raw["doc_id"],
                title=raw["title"],
                body=raw["body"],
                image_refs=list(raw["image_refs"]),
                ku_kind=raw["ku_kind"],
                ku_names=raw["ku_names"],
            )
        for raw in manifest["chunks"]:
            store.chunks[raw["chunk_id"]] = Chunk(
                chunk_id=raw["chunk_id"],
                doc_id=raw["doc_id"],
                sentences=list(raw["sentences"]),
                token_count=raw["token_count"],
                oversized_flag=raw["oversized_flag"],
            )
        for raw in manifest["units"]:
            store.units[raw["ku_id"]] = KnowledgeUnit(
                ku_id=raw["ku_id"],
                name=raw["name"],
                image_ids=list(raw["image_ids"]),
                chunk_ids=list(raw["chunk_ids"]),
                kind=raw["kind"],
            )
        for raw in manifest["images"]:
            store.images[raw["image_id"]] = ImageRecord(
                image_id=raw["image_id"], doc_id=raw["doc_id"], ref=raw["ref"]
            )
        store._next_chunk_id = manifest["next_chunk_id"]
        store._next_image_id = manifest["next_image_id"]
        store._slug_counts = dict(manifest["slug_counts"])
        store.chunk_index = VectorIndex.load(os.path.join(directory, "chunks"))
        store.image_index = VectorIndex.load(os.path.join(directory, "images"))
        if store.chunk_index.dim != store.config.embedding_dim:
            raise StoreError("persisted chunk index dim does not match store config")
        store.check_integrity()
        return store


def load_corpus_jsonl(path: str):
    """Yield (line_number, Document) pairs from a JSON-lines corpus file.

    Raises CorpusFormatError with the offending line number on bad JSON,
    missing doc_id, or invalid field types. Unknown extra keys are ignored.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc.msg}", line_no) from exc
            if not isinstance(raw, dict) or not isinstance(raw.get("doc_id"), str) or not raw["doc_id"]:
                raise CorpusFormatError("each line needs a non-empty string doc_id", line_no)
            images = raw.get("images", [])
            ku_names = raw.get("ku_names")
            if not isinstance(images, list) or (
                ku_names is not None and not isinstance(ku_names, list)
            ):
                raise CorpusFormatError("images and ku_names must be lists", line_no)
            try:
                doc = Document(
                    doc_id=raw["doc_id"],
                    title=str(raw.get("title", "")),
                    body=str(raw.get("text", "")),
                    image_refs=[str(r) for r in images],
                    ku_kind=str(raw.get("kind", "entity")),
                    ku_names=[str(n) for n in ku_names] if ku_names is not None else None,
                )
            except StoreError as exc:
                raise CorpusFormatError(str(exc), line_no) from exc
            yield line_no, doc
