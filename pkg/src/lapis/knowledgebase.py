"""Crime-investigation knowledgebase: corpus ingestion, chunking, statistics.

Source documents (textbooks, law articles, court rulings) arrive as
line-delimited JSON records and are normalized into paragraphs sized for
embedding. After ingestion the knowledgebase is immutable and safe to share
across threads.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

SOURCE_KINDS = ("textbook", "law_article", "court_ruling")

DEFAULT_MAX_TOKENS = 512
MIN_MAX_TOKENS = 32

_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")
_SECTION_RE = re.compile(r"\n[ \t]*\n+")


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class Tokenizer(Protocol):
    tokenizer_id: str

    def tokenize(self, text: str) -> list[str]: ...


class SimpleTokenizer:
    """Whitespace+punctuation tokenizer; stands in for provider tokenizers."""

    tokenizer_id = "simple"

    def tokenize(self, text: str) -> list[str]:
        return _WORD_RE.findall(text)


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse whitespace runs to single spaces."""
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.split())


def split_sections(body: str) -> list[str]:
    """Split a document body on blank-line boundaries; drops empty sections."""
    body = unicodedata.normalize("NFC", body)
    return [s for s in (_SECTION_RE.split(body)) if s.strip()]


def split_sentences(text: str) -> list[str]:
    """Split normalized text into sentences after terminal punctuation."""
    return [s for s in _SENTENCE_RE.split(text) if s]


@dataclass(frozen=True)
class SourceDocument:
    id: str
    source_kind: str
    title: str
    body: str
    ref_no: str | None = None

    def __post_init__(self):
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source_kind {self.source_kind!r}")
        if not self.body or not self.body.strip():
            raise ValueError(f"document {self.id!r} has empty body")
        has_ref = self.ref_no is not None and self.ref_no != ""
        if (self.source_kind == "court_ruling") != has_ref:
            raise ValueError(
                f"document {self.id!r}: ref_no is required for court rulings "
                "and forbidden otherwise"
            )


@dataclass(frozen=True)
class Paragraph:
    id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int

    def __post_init__(self):
        if self.ordinal < 0:
            raise ValueError("ordinal must be non-negative")
        if not self.text or self.text != self.text.strip():
            raise ValueError("paragraph text must be non-empty and trimmed")
        if self.token_count <= 0:
            raise ValueError("token_count must be positive")


def paragraph_id(doc_id: str, ordinal: int) -> str:
    return f"{doc_id}::{ordinal:04d}"


def chunk_document(
    doc: SourceDocument,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    tokenizer: Tokenizer | None = None,
) -> list[Paragraph]:
    """Chunk a document into paragraphs of at most ``max_tokens`` tokens.

    Blank-line section boundaries are never merged across. Within a section,
    whole sentences are packed greedily; a single sentence longer than the
    budget becomes its own paragraph.
    """
    if max_tokens < MIN_MAX_TOKENS:
        raise ValueError(f"max_tokens must be >= {MIN_MAX_TOKENS}")
    tokenizer = tokenizer or SimpleTokenizer()

    paragraphs: list[Paragraph] = []

    def flush(sentences: list[str]) -> None:
        if not sentences:
            return
        text = " ".join(sentences)
        ordinal = len(paragraphs)
        paragraphs.append(
            Paragraph(
                id=paragraph_id(doc.id, ordinal),
                doc_id=doc.id,
                ordinal=ordinal,
                text=text,
                token_count=len(tokenizer.tokenize(text)),
            )
        )

    for section in split_sections(doc.body):
        pending: list[str] = []
        pending_tokens = 0
        for sentence in split_sentences(normalize_text(section)):
            n = len(tokenizer.tokenize(sentence))
            if pending and pending_tokens + n > max_tokens:
                flush(pending)
                pending, pending_tokens = [], 0
            pending.append(sentence)
            pending_tokens += n
            if n > max_tokens:
                # oversize sentence: indivisible, gets its own paragraph
                flush(pending)
                pending, pending_tokens = [], 0
        flush(pending)

    return paragraphs


@dataclass
class KindStats:
    paragraph_count: int = 0
    token_count: int = 0


@dataclass
class CorpusStats:
    per_kind: dict[str, KindStats] = field(
        default_factory=lambda: {k: KindStats() for k in SOURCE_KINDS}
    )

    @property
    def total_paragraphs(self) -> int:
        return sum(s.paragraph_count for s in self.per_kind.values())

    @property
    def total_tokens(self) -> int:
        return sum(s.token_count for s in self.per_kind.values())


class KnowledgeBase:
    """Immutable handle over an ingested corpus."""

    def __init__(
        self,
        documents: Iterable[SourceDocument],
        paragraphs: Iterable[Paragraph],
        max_tokens: int,
        tokenizer_id: str,
    ):
        self.documents: dict[str, SourceDocument] = {d.id: d for d in documents}
        self.paragraphs: list[Paragraph] = list(paragraphs)
        self.max_tokens = max_tokens
        self.tokenizer_id = tokenizer_id
        self._by_id = {p.id: p for p in self.paragraphs}

    def __len__(self) -> int:
        return len(self.paragraphs)

    def paragraph(self, pid: str) -> Paragraph:
        return self._by_id[pid]

    def document(self, doc_id: str) -> SourceDocument:
        return self.documents[doc_id]

    def document_of(self, pid: str) -> SourceDocument:
        return self.documents[self._by_id[pid].doc_id]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "documents.jsonl", "w", encoding="utf-8") as f:
            for doc in self.documents.values():
                rec = {
                    "id": doc.id,
                    "source_kind": doc.source_kind,
                    "title": doc.title,
                    "body": doc.body,
                }
                if doc.ref_no is not None:
                    rec["ref_no"] = doc.ref_no
                f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        with open(directory / "paragraphs.jsonl", "w", encoding="utf-8") as f:
            for p in self.paragraphs:
                rec = {
                    "id": p.id,
                    "doc_id": p.doc_id,
                    "ordinal": p.ordinal,
                    "text": p.text,
                    "token_count": p.token_count,
                }
                f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        meta = {"max_tokens": self.max_tokens, "tokenizer_id": self.tokenizer_id}
        (directory / "corpus_meta.json").write_text(
            json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "KnowledgeBase":
        directory = Path(directory)
        meta = json.loads((directory / "corpus_meta.json").read_text(encoding="utf-8"))
        documents = []
        with open(directory / "documents.jsonl", encoding="utf-8") as f:
            for line in f:
                rec = json.loads(line)
                documents.append(
                    SourceDocument(
                        id=rec["id"],
                        source_kind=rec["source_kind"],
                        title=rec["title"],
                        body=rec["body"],
                        ref_no=rec.get("ref_no"),
                    )
                )
        paragraphs = []
        with open(directory / "paragraphs.jsonl", encoding="utf-8") as f:
            for line in f:
                rec = json.loads(line)
                paragraphs.append(Paragraph(**rec))
        return cls(documents, paragraphs, meta["max_tokens"], meta["tokenizer_id"])


_REQUIRED_FIELDS = ("id", "source_kind", "title", "body")


def parse_corpus_record(rec: dict, line_no: int) -> SourceDocument:
    if not isinstance(rec, dict):
        raise CorpusFormatError("record is not an object", line_no)
    for name in _REQUIRED_FIELDS:
        if name not in rec:
            raise CorpusFormatError(f"missing field {name!r}", line_no)
    try:
        return SourceDocument(
            id=str(rec["id"]),
            source_kind=rec["source_kind"],
            title=str(rec["title"]),
            body=rec["body"],
            ref_no=rec.get("ref_no"),
        )
    except ValueError as exc:
        raise CorpusFormatError(str(exc), line_no) from exc


def ingest_corpus(
    path: str | Path,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    tokenizer: Tokenizer | None = None,
) -> KnowledgeBase:
    """Load a line-delimited corpus file into a KnowledgeBase.

    Deterministic: the same file always yields the same document order,
    paragraph ids and ordinals.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    tokenizer = tokenizer or SimpleTokenizer()

    documents: list[SourceDocument] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
            doc = parse_corpus_record(rec, line_no)
            if doc.id in seen:
                raise CorpusFormatError(f"duplicate document id {doc.id!r}", line_no)
            seen.add(doc.id)
            documents.append(doc)

    if not documents:
        raise CorpusFormatError(f"corpus file {path} contains no records")

    paragraphs: list[Paragraph] = []
    for doc in documents:
        paragraphs.extend(chunk_document(doc, max_tokens, tokenizer))
    return KnowledgeBase(documents, paragraphs, max_tokens, tokenizer.tokenizer_id)


def corpus_statistics(kb: KnowledgeBase) -> CorpusStats:
    """Per-source-kind paragraph and token counts, with totals."""
    stats = CorpusStats()
    for p in kb.paragraphs:
        kind = kb.documents[p.doc_id].source_kind
        stats.per_kind[kind].paragraph_count += 1
        stats.per_kind[kind].token_count += p.token_count
    return stats
