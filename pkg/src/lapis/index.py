"""Dense vector index over knowledgebase paragraphs.

Embeddings come from a pluggable provider: a remote HTTP client for real
deployments and a deterministic local feature-hashing embedder for tests.
Search is exact (exhaustive cosine scan), which is the reference behavior at
this corpus scale.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

from .knowledgebase import KnowledgeBase, SimpleTokenizer

PROVIDER_KEY_ENV = "LAPIS_PROVIDER_KEY"


class ProviderError(RuntimeError):
    """Embedding provider failure; safe to retry."""


class IndexBuildError(RuntimeError):
    """Raised when an index build stops early; carries completed entry count."""

    def __init__(self, message: str, completed: int):
        super().__init__(f"{message} (completed {completed} entries)")
        self.completed = completed


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int
    provider_id: str

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ValueError(f"expected {self.dim} values, got {len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding contains non-finite values")


@dataclass(frozen=True)
class IndexEntry:
    paragraph_id: str
    vector: EmbeddingVector


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int
    call_count: int

    def embed_text(self, text: str) -> list[float]: ...


class HashingEmbeddingProvider:
    """Deterministic local embedder: signed feature hashing, unit L2 norm.

    Not a semantic model; ranks by token overlap, which is enough for
    deterministic retrieval tests without network access.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim
        self.provider_id = f"hashing-{dim}"
        self.call_count = 0
        self._tokenizer = SimpleTokenizer()

    def embed_text(self, text: str) -> list[float]:
        self.call_count += 1
        acc = [0.0] * self.dim
        for token in self._tokenizer.tokenize(text.lower()):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            acc[bucket] += sign
        norm = math.sqrt(sum(v * v for v in acc))
        if norm == 0.0:
            # no tokens hashed; fall back to a fixed unit direction
            acc[0] = 1.0
            return acc
        return [v / norm for v in acc]


class RemoteEmbeddingProvider:
    """HTTP embedding client. POSTs {model, input} and expects {embedding}."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int,
        timeout: float = 30.0,
        api_key_env: str = PROVIDER_KEY_ENV,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.provider_id = f"remote-{model}"
        self.timeout = timeout
        self.api_key_env = api_key_env
        self.call_count = 0

    def embed_text(self, text: str) -> list[float]:
        self.call_count += 1
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"embedding request returned {resp.status_code}")
        try:
            return list(resp.json()["embedding"])
        except (KeyError, ValueError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Embedding cache keyed by (provider_id, content hash).

    Concurrent reads are lock-free; writes are serialized. With a backing
    path, entries are appended to a JSONL log and reloaded on open.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, list[float]] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        rec = json.loads(line)
                        self._entries[rec["key"]] = rec["values"]

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        return f"{provider_id}:{content_hash(text)}"

    def get(self, provider_id: str, text: str) -> list[float] | None:
        return self._entries.get(self.key(provider_id, text))

    def put(self, provider_id: str, text: str, values: list[float]) -> None:
        k = self.key(provider_id, text)
        with self._lock:
            if k in self._entries:
                return
            self._entries[k] = list(values)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps({"key": k, "values": list(values)}) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


def embed(
    text: str,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> EmbeddingVector:
    """Embed text through the provider, consulting the cache first."""
    if not text or not text.strip():
        raise ValueError("cannot embed empty text")
    if cache is not None:
        hit = cache.get(provider.provider_id, text)
        if hit is not None:
            return EmbeddingVector(tuple(hit), provider.dim, provider.provider_id)
    values = provider.embed_text(text)
    vector = EmbeddingVector(tuple(values), provider.dim, provider.provider_id)
    if cache is not None:
        cache.put(provider.provider_id, text, list(values))
    return vector


class VectorIndex:
    """Immutable exact-search index; supports concurrent searches."""

    def __init__(self, provider_id: str, dim: int, entries: list[IndexEntry]):
        self.provider_id = provider_id
        self.dim = dim
        self.entries = entries
        self.search_count = 0
        self._ids = [e.paragraph_id for e in entries]
        if entries:
            self._matrix = np.array([e.vector.values for e in entries], dtype=np.float64)
            self._norms = np.linalg.norm(self._matrix, axis=1)
        else:
            self._matrix = np.zeros((0, dim), dtype=np.float64)
            self._norms = np.zeros(0, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta_path = directory / "index_meta.json"
        if meta_path.exists():
            existing = json.loads(meta_path.read_text(encoding="utf-8"))
            if existing["dim"] != self.dim or existing["provider_id"] != self.provider_id:
                raise ValueError(
                    f"index at {directory} was built with "
                    f"{existing['provider_id']} (dim {existing['dim']}), "
                    f"refusing to overwrite with {self.provider_id} (dim {self.dim})"
                )
        meta = {"provider_id": self.provider_id, "dim": self.dim, "count": len(self)}
        meta_path.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
        with open(directory / "index_entries.jsonl", "w", encoding="utf-8") as f:
            for entry in self.entries:
                rec = {
                    "paragraph_id": entry.paragraph_id,
                    "values": list(entry.vector.values),
                }
                f.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "VectorIndex":
        directory = Path(directory)
        meta = json.loads((directory / "index_meta.json").read_text(encoding="utf-8"))
        entries = []
        with open(directory / "index_entries.jsonl", encoding="utf-8") as f:
            for line in f:
                rec = json.loads(line)
                entries.append(
                    IndexEntry(
                        paragraph_id=rec["paragraph_id"],
                        vector=EmbeddingVector(
                            tuple(rec["values"]), meta["dim"], meta["provider_id"]
                        ),
                    )
                )
        if len(entries) != meta["count"]:
            raise ValueError(
                f"index at {directory}: metadata says {meta['count']} entries, "
                f"found {len(entries)}"
            )
        return cls(meta["provider_id"], meta["dim"], entries)


def build_index(
    kb: KnowledgeBase,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
) -> VectorIndex:
    """Embed every paragraph; one entry per paragraph, in corpus order."""
    entries: list[IndexEntry] = []
    for p in kb.paragraphs:
        try:
            vector = embed(p.text, provider, cache)
        except ProviderError as exc:
            raise IndexBuildError(str(exc), completed=len(entries)) from exc
        if vector.dim != provider.dim:
            raise ValueError(
                f"provider returned dim {vector.dim}, expected {provider.dim}"
            )
        entries.append(IndexEntry(paragraph_id=p.id, vector=vector))
    return VectorIndex(provider.provider_id, provider.dim, entries)


def search_top_k(
    index: VectorIndex, query_vector: EmbeddingVector, k: int
) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity, ties broken by ascending paragraph id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query_vector.dim != index.dim:
        raise ValueError(
            f"query dim {query_vector.dim} does not match index dim {index.dim}"
        )
    index.search_count += 1
    if len(index) == 0:
        return []
    q = np.asarray(query_vector.values, dtype=np.float64)
    qnorm = float(np.linalg.norm(q))
    dots = index._matrix @ q
    denom = index._norms * qnorm
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0.0, dots / denom, 0.0)
    ranked = sorted(
        zip(index._ids, scores.tolist()), key=lambda item: (-item[1], item[0])
    )
    return ranked[: min(k, len(ranked))]
