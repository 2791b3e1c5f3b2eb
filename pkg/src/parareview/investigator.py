"""Question answering over the paper under review and fetched web pages.

Documents are split into fixed-size character chunks, embedded, and ranked
by cosine similarity against the question; the top chunks are packed into
an abstractive QA prompt. A reply of "I don't know" (after normalization)
marks the pair as unanswered so downstream stages can drop it.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import (
    BackendError,
    ChatClient,
    ChatRequest,
    EmbeddingClient,
    EmbeddingVector,
    SearchClient,
)
from .prompting import PromptLibrary

log = logging.getLogger(__name__)

NO_ANSWER_TEXT = "I don't know"

SOURCE_PAPER = "paper"
SOURCE_WEB = "web"


class EmptyDocument(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    url: str | None = None


@dataclass(frozen=True)
class DocumentChunk:
    doc_id: str
    chunk_index: int
    text: str
    start: int = 0
    embedding: EmbeddingVector | None = field(default=None, compare=False)


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    source: str
    evidence: tuple[tuple[str, int, float], ...] = ()
    url: str | None = None

    @property
    def is_no_answer(self) -> bool:
        return is_refusal(self.answer)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer": self.answer,
            "source": self.source,
            "evidence": [list(e) for e in self.evidence],
            "url": self.url,
            "is_no_answer": self.is_no_answer,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "QAPair":
        return cls(
            question=payload["question"],
            answer=payload["answer"],
            source=payload["source"],
            evidence=tuple((e[0], int(e[1]), float(e[2])) for e in payload.get("evidence", [])),
            url=payload.get("url"),
        )


@dataclass
class ContextLog:
    paragraph: str
    pairs: list[QAPair] = field(default_factory=list)

    def append(self, pair: QAPair) -> None:
        self.pairs.append(pair)

    def to_dict(self) -> dict:
        return {"paragraph": self.paragraph, "pairs": [p.to_dict() for p in self.pairs]}

    @classmethod
    def from_dict(cls, payload: dict) -> "ContextLog":
        return cls(paragraph=payload["paragraph"],
                   pairs=[QAPair.from_dict(p) for p in payload.get("pairs", [])])


_STRIP_CHARS = string.whitespace + string.punctuation + "‘’“”"


def is_refusal(answer: str) -> bool:
    """True when the reply is the refusal sentence up to whitespace/punct/case."""
    text = answer.replace("’", "'").casefold().strip(_STRIP_CHARS)
    return " ".join(text.split()) == "i don't know"


# --------------------------------------------------------------------------
# chunking and retrieval


def chunk_document(doc_id: str, text: str, chunk_chars: int = 1000,
                   overlap_chars: int = 100) -> list[DocumentChunk]:
    """Fixed-size chunks with the given character overlap.

    Start offsets advance by chunk_chars - overlap_chars, so every chunk
    except the last has exactly chunk_chars characters and consecutive
    chunks share overlap_chars characters.
    """
    if not text:
        raise EmptyDocument(f"document {doc_id!r} is empty")
    if chunk_chars <= 0:
        raise ValueError("chunk_chars must be positive")
    if overlap_chars < 0 or overlap_chars >= chunk_chars:
        raise ValueError("overlap_chars must satisfy 0 <= overlap < chunk_chars")
    step = chunk_chars - overlap_chars
    return [
        DocumentChunk(doc_id=doc_id, chunk_index=i, text=text[start:start + chunk_chars],
                      start=start)
        for i, start in enumerate(range(0, len(text), step))
    ]


def _as_vector(v) -> np.ndarray:
    if hasattr(v, "as_array"):
        return v.as_array()
    return np.asarray(v, dtype=float)


def cosine_similarity(a, b) -> float:
    """Cosine between two vectors (EmbeddingVector, array, or sequence)."""
    va, vb = _as_vector(a), _as_vector(b)
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        return 0.0
    return float(np.dot(va, vb) / denom)


def top_k_chunks(question_embedding: EmbeddingVector, chunks: Sequence[DocumentChunk],
                 k: int) -> list[tuple[DocumentChunk, float]]:
    """Top-k chunks by cosine similarity, ties broken by (doc_id, chunk_index)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = []
    for chunk in chunks:
        if chunk.embedding is None:
            raise ValueError(f"chunk {chunk.doc_id}#{chunk.chunk_index} is not embedded")
        scored.append((chunk, cosine_similarity(question_embedding, chunk.embedding)))
    scored.sort(key=lambda cs: (-cs[1], cs[0].doc_id, cs[0].chunk_index))
    return scored[:k]


class CorpusIndex:
    """Embedded chunks of one or more documents, ready for similarity search."""

    def __init__(self, chunks: list[DocumentChunk], urls: dict[str, str] | None = None):
        self.chunks = chunks
        self.urls = urls or {}

    @classmethod
    def build(cls, documents: Sequence[Document], embedder: EmbeddingClient,
              chunk_chars: int = 1000, overlap_chars: int = 100) -> "CorpusIndex":
        chunks: list[DocumentChunk] = []
        urls: dict[str, str] = {}
        for doc in documents:
            if doc.url:
                urls[doc.doc_id] = doc.url
            for chunk in chunk_document(doc.doc_id, doc.text, chunk_chars, overlap_chars):
                chunks.append(replace(chunk, embedding=embedder.embed(chunk.text)))
        return cls(chunks, urls)

    def top_k(self, question_embedding: EmbeddingVector,
              k: int) -> list[tuple[DocumentChunk, float]]:
        return top_k_chunks(question_embedding, self.chunks, k)


def load_corpus(manifest_path: str | Path) -> list[Document]:
    """Load documents listed in a manifest JSON {doc_id: {path, url?}}."""
    manifest_path = Path(manifest_path)
    payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    documents = []
    for doc_id, entry in payload.items():
        if isinstance(entry, str):
            entry = {"path": entry}
        text = (manifest_path.parent / entry["path"]).read_text(encoding="utf-8")
        documents.append(Document(doc_id=doc_id, text=text, url=entry.get("url")))
    return documents


# --------------------------------------------------------------------------
# question answering


def answer_from_context(question: str, scored_chunks: Sequence[tuple[DocumentChunk, float]],
                        chat: ChatClient, prompts: PromptLibrary,
                        source: str = SOURCE_PAPER, url: str | None = None) -> QAPair:
    if not scored_chunks:
        raise ValueError("scored_chunks must be non-empty")
    context_text = "\n\n".join(chunk.text for chunk, _ in scored_chunks)
    template = prompts.load("qa")
    user = template.fill_user({"context": context_text, "question": question})
    reply = chat.generate(ChatRequest(
        system_message=template.system, user_message=user, tag="qa"))
    evidence = tuple((c.doc_id, c.chunk_index, round(s, 6)) for c, s in scored_chunks)
    return QAPair(question=question, answer=reply.strip(), source=source,
                  evidence=evidence, url=url)


def no_answer_pair(question: str, source: str, cause: str) -> QAPair:
    log.info("no answer for %r: %s", question, cause)
    return QAPair(question=question, answer=NO_ANSWER_TEXT, source=source, evidence=())


def answer_from_paper(question: str, index: CorpusIndex, embedder: EmbeddingClient,
                      chat: ChatClient, prompts: PromptLibrary, k: int = 5) -> QAPair:
    if not index.chunks:
        return no_answer_pair(question, SOURCE_PAPER, "empty corpus index")
    scored = index.top_k(embedder.embed(question), k)
    return answer_from_context(question, scored, chat, prompts, source=SOURCE_PAPER)


def answer_from_web(question: str, search: SearchClient, fetcher, embedder: EmbeddingClient,
                    chat: ChatClient, prompts: PromptLibrary, k: int = 5,
                    max_hits: int = 5, chunk_chars: int = 1000,
                    overlap_chars: int = 100) -> QAPair:
    hits = search.search(question)
    if not hits:
        return no_answer_pair(question, SOURCE_WEB, "no unblocked search results")
    documents = []
    for hit in hits[:max_hits]:
        try:
            text = fetcher.fetch(hit.url)
        except BackendError as exc:
            log.warning("fetch failed for %s: %s", hit.url, exc)
            continue
        if text:
            documents.append(Document(doc_id=hit.url, text=text, url=hit.url))
    if not documents:
        return no_answer_pair(question, SOURCE_WEB, "all fetches failed or empty")
    index = CorpusIndex.build(documents, embedder, chunk_chars, overlap_chars)
    scored = index.top_k(embedder.embed(question), k)
    best_url = scored[0][0].doc_id if scored else None
    return answer_from_context(question, scored, chat, prompts,
                               source=SOURCE_WEB, url=best_url)
