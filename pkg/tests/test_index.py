from __future__ import annotations

from random import Random

import pytest

from lapis.index import (
    EmbeddingCache,
    EmbeddingVector,
    HashingEmbeddingProvider,
    IndexBuildError,
    IndexEntry,
    ProviderError,
    VectorIndex,
    build_index,
    embed,
    search_top_k,
)
from lapis.knowledgebase import KnowledgeBase, Paragraph, SourceDocument

from .oracles import brute_force_top_k


class FixedProvider:
    """Maps texts to preset vectors; counts real embedding calls."""

    def __init__(self, mapping: dict[str, list[float]], dim: int):
        self.mapping = mapping
        self.dim = dim
        self.provider_id = f"fixed-{dim}"
        self.call_count = 0

    def embed_text(self, text: str) -> list[float]:
        self.call_count += 1
        return self.mapping[text]


class FlakyProvider(HashingEmbeddingProvider):
    """Fails with a retryable error after a set number of calls."""

    def __init__(self, dim: int, fail_after: int):
        super().__init__(dim)
        self.fail_after = fail_after

    def embed_text(self, text: str) -> list[float]:
        if self.call_count >= self.fail_after:
            raise ProviderError("provider unavailable")
        return super().embed_text(text)


def _random_index(rng: Random, n: int, dim: int) -> VectorIndex:
    entries = [
        IndexEntry(
            paragraph_id=f"p{i:04d}",
            vector=EmbeddingVector(
                tuple(rng.uniform(-1, 1) for _ in range(dim)), dim, "test"
            ),
        )
        for i in range(n)
    ]
    return VectorIndex("test", dim, entries)


def test_embed_deterministic():
    provider = HashingEmbeddingProvider(dim=64)
    v1 = embed("a", provider)
    v2 = embed("a", provider)
    assert v1.values == v2.values


def test_hash_provider_contract():
    provider = HashingEmbeddingProvider(dim=64)
    v = embed("criminal investigation knowledge", provider)
    assert v.dim == 64
    assert len(v.values) == 64
    norm = sum(x * x for x in v.values) ** 0.5
    assert norm == pytest.approx(1.0, abs=1e-12)


def test_embed_rejects_empty_text():
    provider = HashingEmbeddingProvider(dim=8)
    with pytest.raises(ValueError):
        embed("   ", provider)


def test_cache_avoids_provider_calls():
    provider = HashingEmbeddingProvider(dim=16)
    cache = EmbeddingCache()
    embed("some premise text", provider, cache)
    assert provider.call_count == 1
    embed("some premise text", provider, cache)
    assert provider.call_count == 1  # cache hit, zero new requests


def test_cache_persists_to_disk(tmp_path):
    path = tmp_path / "cache.jsonl"
    provider = HashingEmbeddingProvider(dim=16)
    first = embed("text", provider, EmbeddingCache(path))
    reloaded = EmbeddingCache(path)
    assert len(reloaded) == 1
    provider2 = HashingEmbeddingProvider(dim=16)
    second = embed("text", provider2, reloaded)
    assert provider2.call_count == 0
    assert second.values == first.values


def test_build_index_one_entry_per_paragraph(kb, provider):
    index = build_index(kb, HashingEmbeddingProvider(dim=32))
    assert len(index) == len(kb.paragraphs)
    assert sorted(e.paragraph_id for e in index.entries) == sorted(
        p.id for p in kb.paragraphs
    )


def test_rebuild_is_byte_identical(tmp_path, kb):
    for name in ("one", "two"):
        build_index(kb, HashingEmbeddingProvider(dim=32)).save(tmp_path / name)
    for name in ("index_meta.json", "index_entries.jsonl"):
        assert (tmp_path / "one" / name).read_bytes() == (
            tmp_path / "two" / name
        ).read_bytes()


def test_build_index_synthetic_scale():
    docs, paragraphs = [], []
    for i in range(100):
        doc_id = f"doc{i}"
        docs.append(
            SourceDocument(
                id=doc_id, source_kind="textbook", title="t", body=f"Sentence {i}."
            )
        )
        paragraphs.append(
            Paragraph(
                id=f"{doc_id}::0000",
                doc_id=doc_id,
                ordinal=0,
                text=f"Sentence number {i} about case {i % 7}.",
                token_count=6,
            )
        )
    kb = KnowledgeBase(docs, paragraphs, 512, "simple")
    index = build_index(kb, HashingEmbeddingProvider(dim=24))
    assert len(index) == 100
    assert all(e.vector.dim == 24 for e in index.entries)


def test_partial_failure_is_resumable(tmp_path, kb):
    cache = EmbeddingCache(tmp_path / "cache.jsonl")
    flaky = FlakyProvider(dim=32, fail_after=2)
    with pytest.raises(IndexBuildError) as err:
        build_index(kb, flaky, cache)
    assert err.value.completed == 2

    healed = HashingEmbeddingProvider(dim=32)
    index = build_index(kb, healed, EmbeddingCache(tmp_path / "cache.jsonl"))
    assert len(index) == len(kb.paragraphs)
    # the two cached embeddings were not recomputed
    assert healed.call_count == len(kb.paragraphs) - 2


def test_save_refuses_mismatched_overwrite(tmp_path, kb):
    build_index(kb, HashingEmbeddingProvider(dim=32)).save(tmp_path)
    other = build_index(kb, HashingEmbeddingProvider(dim=16))
    with pytest.raises(ValueError, match="refusing to overwrite"):
        other.save(tmp_path)


def test_index_load_round_trip(tmp_path, kb):
    index = build_index(kb, HashingEmbeddingProvider(dim=32))
    index.save(tmp_path)
    loaded = VectorIndex.load(tmp_path)
    assert loaded.provider_id == index.provider_id
    assert len(loaded) == len(index)
    query = EmbeddingVector(index.entries[0].vector.values, 32, index.provider_id)
    assert search_top_k(loaded, query, 3) == search_top_k(index, query, 3)


def test_search_self_match():
    mapping = {"a": [1.0, 0.0, 0.0, 0.0], "b": [0.0, 1.0, 0.0, 0.0]}
    provider = FixedProvider(mapping, dim=4)
    entries = [
        IndexEntry(f"p-{t}", EmbeddingVector(tuple(v), 4, provider.provider_id))
        for t, v in mapping.items()
    ]
    index = VectorIndex(provider.provider_id, 4, entries)
    result = search_top_k(index, embed("a", provider), 1)
    assert result[0][0] == "p-a"
    assert result[0][1] == pytest.approx(1.0, abs=1e-9)


def test_search_orthogonal_scores_zero():
    entries = [
        IndexEntry("p0", EmbeddingVector((1.0, 0.0, 0.0), 3, "t")),
        IndexEntry("p1", EmbeddingVector((0.0, 1.0, 0.0), 3, "t")),
    ]
    index = VectorIndex("t", 3, entries)
    result = search_top_k(index, EmbeddingVector((0.0, 0.0, 1.0), 3, "t"), 5)
    assert all(score == pytest.approx(0.0, abs=1e-12) for _, score in result)


def test_search_matches_brute_force_oracle():
    rng = Random(7)
    index = _random_index(rng, 50, 16)
    query = EmbeddingVector(tuple(rng.uniform(-1, 1) for _ in range(16)), 16, "test")
    expected = brute_force_top_k(
        [(e.paragraph_id, list(e.vector.values)) for e in index.entries],
        list(query.values),
        5,
    )
    actual = search_top_k(index, query, 5)
    assert [pid for pid, _ in actual] == [pid for pid, _ in expected]
    for (_, a), (_, b) in zip(actual, expected):
        assert a == pytest.approx(b, abs=1e-9)


def test_search_tie_order_by_id():
    same = (0.5, 0.5, 0.0)
    entries = [
        IndexEntry("p-z", EmbeddingVector(same, 3, "t")),
        IndexEntry("p-a", EmbeddingVector(same, 3, "t")),
        IndexEntry("p-m", EmbeddingVector(same, 3, "t")),
    ]
    index = VectorIndex("t", 3, entries)
    result = search_top_k(index, EmbeddingVector((1.0, 1.0, 0.0), 3, "t"), 3)
    assert [pid for pid, _ in result] == ["p-a", "p-m", "p-z"]


def test_search_scale_invariance():
    rng = Random(3)
    index = _random_index(rng, 40, 12)
    base = [rng.uniform(-1, 1) for _ in range(12)]
    r1 = search_top_k(index, EmbeddingVector(tuple(base), 12, "test"), 10)
    scaled = EmbeddingVector(tuple(3.7 * v for v in base), 12, "test")
    r2 = search_top_k(index, scaled, 10)
    assert [pid for pid, _ in r1] == [pid for pid, _ in r2]


def test_search_monotone_k():
    rng = Random(5)
    index = _random_index(rng, 30, 8)
    query = EmbeddingVector(tuple(rng.uniform(-1, 1) for _ in range(8)), 8, "test")
    for k in range(1, 12):
        smaller = search_top_k(index, query, k)
        larger = search_top_k(index, query, k + 1)
        assert larger[:k] == smaller


def test_search_truncates_to_index_size():
    rng = Random(9)
    index = _random_index(rng, 3, 4)
    query = EmbeddingVector((1.0, 0.0, 0.0, 0.0), 4, "test")
    assert len(search_top_k(index, query, 10)) == 3


def test_search_dim_mismatch():
    index = _random_index(Random(1), 5, 8)
    with pytest.raises(ValueError, match="dim"):
        search_top_k(index, EmbeddingVector((1.0,), 1, "test"), 1)


def test_search_empty_index():
    index = VectorIndex("t", 4, [])
    assert search_top_k(index, EmbeddingVector((1.0, 0, 0, 0), 4, "t"), 5) == []
