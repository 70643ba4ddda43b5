"""Exact top-k cosine similarity index.

A flat store over float32 vectors: every search scans all entries, so results
are exact and easy to check against a brute-force oracle. Searches run on an
immutable snapshot (ids array + pre-normalized matrix) that is rebuilt lazily
after mutations; mutations serialize behind a lock.

Persistence is a little-endian float32 blob next to a JSON manifest, written
atomically via rename.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    BlobFormatError,
    DimensionMismatchError,
    DuplicateEntryError,
    EntryNotFoundError,
)

FORMAT_VERSION = 1


def unit_normalize(vector: np.ndarray) -> np.ndarray:
    """Return the vector scaled to unit Euclidean norm (float32)."""
    v = np.asarray(vector, dtype=np.float32)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two vectors of any positive scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


@dataclass(frozen=True)
class ScoredHit:
    entry_id: int
    score: float


@dataclass(frozen=True)
class _Snapshot:
    ids: np.ndarray       # int64, sorted ascending
    matrix: np.ndarray    # float32, rows unit-normalized, aligned with ids


_EMPTY = _Snapshot(ids=np.empty(0, dtype=np.int64), matrix=np.empty((0, 0), dtype=np.float32))


class VectorIndex:
    """Exact cosine store for integer-keyed embedding vectors."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._vectors: dict[int, np.ndarray] = {}
        self._lock = threading.RLock()
        self._snapshot: _Snapshot | None = _EMPTY

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, entry_id: int) -> bool:
        return entry_id in self._vectors

    def ids(self) -> list[int]:
        return sorted(self._vectors)

    def insert(self, entry_id: int, vector: np.ndarray) -> None:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected vector of dim {self.dim}, got shape {v.shape}"
            )
        with self._lock:
            if entry_id in self._vectors:
                raise DuplicateEntryError(f"entry id {entry_id} already present")
            self._vectors[int(entry_id)] = v.copy()
            self._snapshot = None

    def remove(self, entry_id: int) -> None:
        with self._lock:
            if entry_id not in self._vectors:
                raise EntryNotFoundError(f"entry id {entry_id} not in index")
            del self._vectors[entry_id]
            self._snapshot = None

    def vector(self, entry_id: int) -> np.ndarray:
        """The raw stored vector (a copy)."""
        try:
            return self._vectors[entry_id].copy()
        except KeyError:
            raise EntryNotFoundError(f"entry id {entry_id} not in index") from None

    def _current_snapshot(self) -> _Snapshot:
        snap = self._snapshot
        if snap is not None:
            return snap
        with self._lock:
            if self._snapshot is None:
                ids = np.array(sorted(self._vectors), dtype=np.int64)
                if len(ids) == 0:
                    self._snapshot = _EMPTY
                else:
                    matrix = np.stack([self._vectors[int(i)] for i in ids]).astype(np.float32)
                    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
                    norms[norms == 0.0] = 1.0
                    self._snapshot = _Snapshot(ids=ids, matrix=matrix / norms)
            return self._snapshot

    def search_topk(self, query: np.ndarray, k: int) -> list[ScoredHit]:
        """Exact top-k by cosine similarity.

        Returns min(k, size) hits sorted by score descending, ties broken by
        ascending entry id. An empty index yields an empty list.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected query of dim {self.dim}, got shape {q.shape}"
            )
        snap = self._current_snapshot()
        if len(snap.ids) == 0:
            return []
        qnorm = float(np.linalg.norm(q))
        if qnorm == 0.0:
            scores = np.zeros(len(snap.ids), dtype=np.float64)
        else:
            scores = snap.matrix.astype(np.float64) @ (q.astype(np.float64) / qnorm)
        # lexsort: last key is primary -> (-score) major, id minor; ids are
        # already ascending so a stable sort on -score suffices.
        order = np.argsort(-scores, kind="stable")[: min(k, len(snap.ids))]
        return [
            ScoredHit(entry_id=int(snap.ids[i]), score=float(scores[i])) for i in order
        ]

    def scores_for(self, query: np.ndarray, entry_ids: list[int]) -> list[ScoredHit]:
        """Cosine scores for an explicit id subset, ranked like search_topk.

        Raises EntryNotFoundError on the first id that does not resolve.
        """
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise DimensionMismatchError(
                f"expected query of dim {self.dim}, got shape {q.shape}"
            )
        hits = [ScoredHit(entry_id=int(i), score=cosine(q, self.vector(i))) for i in entry_ids]
        hits.sort(key=lambda h: (-h.score, h.entry_id))
        return hits

    # --- persistence --------------------------------------------------------

    def persist(self, path_prefix: str) -> None:
        """Write `<prefix>.json` manifest and `<prefix>.f32` blob atomically."""
        with self._lock:
            ids = sorted(self._vectors)
            blob = b"".join(
                self._vectors[i].astype("<f4").tobytes() for i in ids
            )
            manifest = {
                "format_version": FORMAT_VERSION,
                "dim": self.dim,
                "count": len(ids),
                "ids": ids,
            }
        _atomic_write(path_prefix + ".f32", blob)
        _atomic_write(
            path_prefix + ".json",
            json.dumps(manifest, sort_keys=True).encode("utf-8"),
        )

    @classmethod
    def load(cls, path_prefix: str) -> "VectorIndex":
        manifest_path = path_prefix + ".json"
        blob_path = path_prefix + ".f32"
        try:
            with open(manifest_path, "rb") as fh:
                manifest = json.loads(fh.read().decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise BlobFormatError(f"unreadable index manifest {manifest_path}", 0) from exc
        for key in ("format_version", "dim", "count", "ids"):
            if key not in manifest:
                raise BlobFormatError(f"manifest missing key {key!r}", 0)
        if manifest["format_version"] != FORMAT_VERSION:
            raise BlobFormatError(
                f"unsupported format_version {manifest['format_version']}", 0
            )
        dim = int(manifest["dim"])
        count = int(manifest["count"])
        ids = [int(i) for i in manifest["ids"]]
        if len(ids) != count:
            raise BlobFormatError("manifest id list does not match count", 0)
        with open(blob_path, "rb") as fh:
            blob = fh.read()
        expected = count * dim * 4
        if len(blob) != expected:
            raise BlobFormatError(
                f"vector blob has {len(blob)} bytes, expected {expected}",
                min(len(blob), expected),
            )
        index = cls(dim)
        if count:
            matrix = np.frombuffer(blob, dtype="<f4").reshape(count, dim)
            for row, entry_id in enumerate(ids):
                index._vectors[entry_id] = matrix[row].astype(np.float32).copy()
            index._snapshot = None
        return index


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
