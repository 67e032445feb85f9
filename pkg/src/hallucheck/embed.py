"""Sentence and triple embeddings with cosine similarity.

The backend is pluggable: a deterministic hash-to-vector embedder for offline
runs, a spec-file embedder that pins exact vectors for chosen texts, and a
sentence-transformer wrapper for production. Every backend memoizes by text
and returns fixed-dimension vectors. Similarities feeding detector scores are
clamped at zero so a score never leaves [0, 1].
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import HallucheckError, Triple


class EmbedBackendError(HallucheckError):
    """The embedding backend is unavailable or failed to produce a vector."""


class DimensionMismatch(HallucheckError):
    """Vector length differs from the configured model dimension."""


class ZeroVector(HallucheckError):
    """Cosine similarity is undefined for an all-zero vector."""


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str

    def __len__(self) -> int:
        return len(self.values)


def cosine_sim(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| * |b|), clamped into [-1, 1] against float round-off."""
    if len(a) != len(b):
        raise DimensionMismatch(f"vector lengths differ: {len(a)} vs {len(b)}")
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity with a zero vector")
    sim = float(np.dot(va, vb) / (norm_a * norm_b))
    return max(-1.0, min(1.0, sim))


def clamp0(sim: float) -> float:
    """Negative similarity is floored at 0 before use as a factuality score."""
    return sim if sim > 0.0 else 0.0


def triple_text(t: Triple) -> str:
    """Linearize a triple for embedding: fields joined by single spaces."""
    return f"{t.subject} {t.relation} {t.obj}"


class MemoizingEmbedder:
    """Base embedder: per-text memoization with serialized writes."""

    model_id: str
    dim: int

    def __init__(self) -> None:
        self._memo: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    def _embed_raw(self, text: str) -> tuple[float, ...]:
        raise NotImplementedError

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        with self._lock:
            hit = self._memo.get(text)
        if hit is not None:
            return hit
        values = self._embed_raw(text)
        if len(values) != self.dim:
            raise DimensionMismatch(
                f"backend returned {len(values)} components, expected {self.dim}"
            )
        vector = EmbeddingVector(values=values, model_id=self.model_id)
        with self._lock:
            self._memo[text] = vector
        return vector


class HashEmbedder(MemoizingEmbedder):
    """Deterministic stand-in embedder: text hashes to a fixed vector.

    Components come from SHA-256 counter blocks mapped into [-1, 1], so the
    mapping is stable across platforms and library versions. Unrelated texts
    get near-orthogonal vectors; identical texts get identical ones.
    """

    def __init__(self, dim: int = 384, seed: int = 0, model_id: str | None = None):
        super().__init__()
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = dim
        self.seed = seed
        self.model_id = model_id or f"hash-{dim}"

    def _embed_raw(self, text: str) -> tuple[float, ...]:
        values: list[float] = []
        block = 0
        while len(values) < self.dim:
            digest = hashlib.sha256(f"{self.seed}:{block}:{text}".encode("utf-8")).digest()
            for i in range(0, 32, 8):
                if len(values) >= self.dim:
                    break
                u = int.from_bytes(digest[i : i + 8], "big")
                values.append(u / 2**63 - 1.0)
            block += 1
        if not any(values):
            values[0] = 1.0
        return tuple(values)


class SpecFileEmbedder(MemoizingEmbedder):
    """Embedder with pinned vectors for exact texts and a hash fallback.

    Spec file layout (JSON): ``model_id``, ``dim``, ``vectors`` mapping exact
    text to a component list, and optional ``fallback_seed`` for texts missing
    from the map.
    """

    def __init__(
        self,
        vectors: dict[str, list[float]],
        dim: int,
        model_id: str = "specfile",
        fallback_seed: int = 0,
    ):
        super().__init__()
        self.dim = dim
        self.model_id = model_id
        self._vectors = vectors
        self._fallback = HashEmbedder(dim=dim, seed=fallback_seed, model_id=model_id)

    @classmethod
    def from_file(cls, path: str | Path) -> "SpecFileEmbedder":
        try:
            spec = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise EmbedBackendError(f"cannot load embedding spec {path}: {exc}") from exc
        return cls(
            vectors=spec.get("vectors", {}),
            dim=int(spec["dim"]),
            model_id=spec.get("model_id", "specfile"),
            fallback_seed=int(spec.get("fallback_seed", 0)),
        )

    def _embed_raw(self, text: str) -> tuple[float, ...]:
        pinned = self._vectors.get(text)
        if pinned is not None:
            if len(pinned) != self.dim:
                raise DimensionMismatch(
                    f"pinned vector for {text!r} has {len(pinned)} components, expected {self.dim}"
                )
            return tuple(float(v) for v in pinned)
        return self._fallback._embed_raw(text)


class SbertEmbedder(MemoizingEmbedder):
    """Sentence-transformer backend; the default model is all-MiniLM-L6-v2."""

    def __init__(self, model_id: str = "all-MiniLM-L6-v2"):
        super().__init__()
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EmbedBackendError(
                "sentence-transformers is not installed (pip install hallucheck[sbert])"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise EmbedBackendError(f"cannot load embedding model {model_id!r}: {exc}") from exc
        self.model_id = model_id
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def _embed_raw(self, text: str) -> tuple[float, ...]:
        try:
            encoded = self._model.encode([text], convert_to_numpy=True, show_progress_bar=False)
        except Exception as exc:
            raise EmbedBackendError(f"embedding failed: {exc}") from exc
        return tuple(float(v) for v in encoded[0])


Embedder = MemoizingEmbedder
