"""Premise retrieval: embed (context, hypothesis) and fetch top-k paragraphs.

The query text is the investigation context followed by a blank line and the
hypothesis; both influence the search. Retrieved paragraphs are hydrated with
their text and provenance so prompts and UIs can cite them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .index import EmbeddingCache, EmbeddingProvider, VectorIndex, embed, search_top_k
from .knowledgebase import KnowledgeBase

DEFAULT_K = 5

NO_PREMISES_MARKER = "NO RELEVANT PREMISES FOUND"

_KIND_LABELS = {"textbook": "textbook", "law_article": "law article"}


@dataclass(frozen=True)
class RetrievalQuery:
    context: str
    hypothesis: str
    k: int = DEFAULT_K

    def __post_init__(self):
        if not self.hypothesis or not self.hypothesis.strip():
            raise ValueError("hypothesis must be non-empty")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class Premise:
    paragraph_id: str
    source_kind: str
    ref_no: str | None
    text: str
    score: float
    rank: int


@dataclass(frozen=True)
class PremiseSet:
    premises: tuple[Premise, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.premises)

    def __iter__(self):
        return iter(self.premises)

    @property
    def ids(self) -> list[str]:
        return [p.paragraph_id for p in self.premises]


def serialize_query(query: RetrievalQuery) -> str:
    """Context first, one blank line, then the hypothesis."""
    if query.context and query.context.strip():
        return f"{query.context}\n\n{query.hypothesis}"
    return query.hypothesis


class Retriever:
    """Stateless retrieval over an immutable index; safe for concurrent use."""

    def __init__(
        self,
        kb: KnowledgeBase,
        index: VectorIndex,
        provider: EmbeddingProvider,
        cache: EmbeddingCache | None = None,
    ):
        self.kb = kb
        self.index = index
        self.provider = provider
        self.cache = cache

    def retrieve_premises(self, query: RetrievalQuery) -> PremiseSet:
        vector = embed(serialize_query(query), self.provider, self.cache)
        hits = search_top_k(self.index, vector, query.k)
        premises = []
        for rank, (pid, score) in enumerate(hits, start=1):
            paragraph = self.kb.paragraph(pid)
            doc = self.kb.document(paragraph.doc_id)
            premises.append(
                Premise(
                    paragraph_id=pid,
                    source_kind=doc.source_kind,
                    ref_no=doc.ref_no,
                    text=paragraph.text,
                    score=score,
                    rank=rank,
                )
            )
        return PremiseSet(tuple(premises))


def format_premises(premises: PremiseSet) -> str:
    """Deterministic numbered premise block with provenance suffixes."""
    if len(premises) == 0:
        return NO_PREMISES_MARKER
    lines = []
    for p in premises:
        if p.source_kind == "court_ruling":
            suffix = f"(Ref No: {p.ref_no})"
        else:
            suffix = f"({_KIND_LABELS[p.source_kind]})"
        lines.append(f"{p.rank}. {p.text} {suffix}")
    return "\n".join(lines)
