from __future__ import annotations

import socket
import time
from pathlib import Path

import pytest

from lapis.index import EmbeddingCache, HashingEmbeddingProvider, build_index
from lapis.knowledgebase import ingest_corpus
from lapis.retriever import Retriever

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

SUITE_STARTED_AT = time.monotonic()


def _no_network(*args, **kwargs):
    raise RuntimeError("test suite must not open network connections")


@pytest.fixture(autouse=True, scope="session")
def block_network():
    """The whole suite runs against local files and mocks only."""
    original_connect = socket.socket.connect
    original_create = socket.create_connection
    socket.socket.connect = _no_network
    socket.create_connection = _no_network
    yield
    socket.socket.connect = original_connect
    socket.create_connection = original_create


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return FIXTURES / "corpus.jsonl"


@pytest.fixture(scope="session")
def kb(corpus_path):
    return ingest_corpus(corpus_path)


@pytest.fixture(scope="session")
def provider():
    return HashingEmbeddingProvider(dim=64)


@pytest.fixture(scope="session")
def index(kb, provider):
    return build_index(kb, provider, EmbeddingCache())


@pytest.fixture()
def retriever(kb, index, provider):
    return Retriever(kb, index, provider, EmbeddingCache())
