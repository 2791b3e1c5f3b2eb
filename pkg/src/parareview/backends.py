"""Pluggable chat, embedding, search and fetch backends.

Every generative or network dependency of the pipeline goes through the
small interfaces defined here. The mock implementations are fully
deterministic so whole runs can be scripted and replayed byte-for-byte in
tests; the HTTP implementations speak a generic JSON contract so any
OpenAI-compatible server (or search proxy) can be plugged in via config.
"""

from __future__ import annotations

import hashlib
import html.parser
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol
from urllib.parse import urlparse

import numpy as np
import requests

DEFAULT_BLOCKLIST = ("openreview.net", "peerj.com", "f1000research.com")


class BackendError(Exception):
    pass


class TransientBackendError(BackendError):
    """Retryable transport failure (connection error, timeout, 5xx)."""


class BackendUnavailable(BackendError):
    """Raised once the retry budget for transient failures is exhausted."""


class BudgetExceeded(BackendError):
    """The per-run call or token cap was hit."""


@dataclass(frozen=True)
class ChatRequest:
    system_message: str
    user_message: str
    temperature: float = 0.0
    max_tokens: int = 1024
    tag: str = ""

    def __post_init__(self):
        if not self.user_message:
            raise ValueError("user_message must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("embedding must be non-empty")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("embedding entries must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class SearchHit:
    url: str
    title: str = ""
    snippet: str = ""


class ChatBackend(Protocol):
    def generate(self, request: ChatRequest) -> str: ...


class EmbeddingBackend(Protocol):
    def embed(self, text: str) -> EmbeddingVector: ...


class SearchBackend(Protocol):
    def search(self, query: str) -> list[SearchHit]: ...


class Fetcher(Protocol):
    def fetch(self, url: str) -> str: ...


# --------------------------------------------------------------------------
# deterministic mocks


@dataclass
class MockRule:
    """One scripted response rule; ``None`` matchers match anything.

    ``responses`` are consumed in order (the last one repeats) so a rule can
    script distinct answers for successive calls. ``transient_failures``
    makes the first N matching calls raise, to exercise retry paths.
    """

    tag: str | None = None
    contains: str | None = None
    responses: list[str] = field(default_factory=list)
    transient_failures: int = 0
    _served: int = 0
    _failed: int = 0

    def matches(self, request: ChatRequest) -> bool:
        if self.tag is not None and self.tag != request.tag:
            return False
        if self.contains is not None and self.contains not in request.user_message:
            return False
        return True

    def next_response(self) -> str:
        if self._failed < self.transient_failures:
            self._failed += 1
            raise TransientBackendError("scripted transient failure")
        if not self.responses:
            raise BackendError("rule has no responses")
        idx = min(self._served, len(self.responses) - 1)
        self._served += 1
        return self.responses[idx]


@dataclass
class MockScript:
    rules: list[MockRule] = field(default_factory=list)
    default: str = "I don't know."

    @classmethod
    def from_dict(cls, payload: dict) -> "MockScript":
        rules = []
        for entry in payload.get("rules", []):
            resp = entry.get("response", entry.get("responses", []))
            responses = [resp] if isinstance(resp, str) else list(resp)
            rules.append(MockRule(
                tag=entry.get("tag"),
                contains=entry.get("contains"),
                responses=responses,
                transient_failures=int(entry.get("transient_failures", 0)),
            ))
        return cls(rules=rules, default=payload.get("default", "I don't know."))

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class MockChatBackend:
    """Scripted chat backend: first matching rule wins, deterministically."""

    def __init__(self, script: MockScript):
        self.script = script
        self.call_history: list[ChatRequest] = []

    def generate(self, request: ChatRequest) -> str:
        self.call_history.append(request)
        for rule in self.script.rules:
            if rule.matches(request):
                return rule.next_response()
        return self.script.default


class MockEmbeddingBackend:
    """Hash-seeded pseudo-random unit vectors; identical text, identical vector."""

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        return EmbeddingVector(tuple(float(x) for x in v))


class MockSearchBackend:
    """Scripted search results plus an in-memory page store for fetching."""

    def __init__(self, fixtures: dict | None = None):
        fixtures = fixtures or {}
        self.queries = fixtures.get("queries", [])
        self.pages: dict[str, str] = fixtures.get("pages", {})
        self.default_hits = fixtures.get("default_hits", [])

    @classmethod
    def from_file(cls, path: str | Path) -> "MockSearchBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def search(self, query: str) -> list[SearchHit]:
        for entry in self.queries:
            if entry.get("contains", "") in query:
                return [SearchHit(**hit) for hit in entry.get("hits", [])]
        return [SearchHit(**hit) for hit in self.default_hits]

    def fetch(self, url: str) -> str:
        if url not in self.pages:
            raise TransientBackendError(f"no fixture page for {url}")
        return self.pages[url]


# --------------------------------------------------------------------------
# HTTP backends (generic JSON contracts)


def _auth_headers(api_key_env: str) -> dict[str, str]:
    import os

    if not api_key_env:
        return {}
    key = os.environ.get(api_key_env, "")
    return {"Authorization": f"Bearer {key}"} if key else {}


def _raise_for_status(resp: requests.Response) -> None:
    if resp.status_code >= 500:
        raise TransientBackendError(f"server error {resp.status_code}")
    if resp.status_code >= 400:
        raise BackendError(f"request failed with {resp.status_code}: {resp.text[:200]}")


class HttpChatBackend:
    """OpenAI-style chat completion endpoint: POST base_url with messages."""

    def __init__(self, base_url: str, model: str, api_key_env: str = "", timeout: float = 60.0):
        self.base_url = base_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def generate(self, request: ChatRequest) -> str:
        messages = []
        if request.system_message:
            messages.append({"role": "system", "content": request.system_message})
        messages.append({"role": "user", "content": request.user_message})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = requests.post(self.base_url, json=payload,
                                 headers=_auth_headers(self.api_key_env), timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(str(exc)) from exc
        _raise_for_status(resp)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed chat response: {exc}") from exc


class HttpEmbeddingBackend:
    def __init__(self, base_url: str, model: str, api_key_env: str = "", timeout: float = 60.0):
        self.base_url = base_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def embed(self, text: str) -> EmbeddingVector:
        try:
            resp = requests.post(self.base_url, json={"model": self.model, "input": text},
                                 headers=_auth_headers(self.api_key_env), timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(str(exc)) from exc
        _raise_for_status(resp)
        try:
            values = resp.json()["data"][0]["embedding"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed embedding response: {exc}") from exc
        return EmbeddingVector(tuple(float(v) for v in values))


class HttpSearchBackend:
    """GET base_url?q=... returning {results: [{url, title, snippet}]}."""

    def __init__(self, base_url: str, api_key_env: str = "", timeout: float = 30.0):
        self.base_url = base_url
        self.api_key_env = api_key_env
        self.timeout = timeout

    def search(self, query: str) -> list[SearchHit]:
        try:
            resp = requests.get(self.base_url, params={"q": query},
                                headers=_auth_headers(self.api_key_env), timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(str(exc)) from exc
        _raise_for_status(resp)
        results = resp.json().get("results", [])
        return [SearchHit(url=r.get("url", ""), title=r.get("title", ""),
                          snippet=r.get("snippet", "")) for r in results]


class _TextExtractor(html.parser.HTMLParser):
    _SKIP = {"script", "style", "noscript"}

    def __init__(self):
        super().__init__()
        self.parts: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1

    def handle_data(self, data):
        if not self._skip_depth and data.strip():
            self.parts.append(data.strip())


def html_to_text(markup: str) -> str:
    extractor = _TextExtractor()
    extractor.feed(markup)
    return "\n".join(extractor.parts)


class HttpFetcher:
    """Fetch a document's text; HTML is stripped, PDFs go through the hook."""

    def __init__(self, max_bytes: int = 2_000_000, timeout: float = 30.0, pdf_hook=None):
        self.max_bytes = max_bytes
        self.timeout = timeout
        self.pdf_hook = pdf_hook

    def fetch(self, url: str) -> str:
        try:
            resp = requests.get(url, timeout=self.timeout, stream=True)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(str(exc)) from exc
        _raise_for_status(resp)
        body = b""
        for chunk in resp.iter_content(chunk_size=65536):
            body += chunk
            if len(body) >= self.max_bytes:
                body = body[: self.max_bytes]
                break
        content_type = resp.headers.get("Content-Type", "")
        if "pdf" in content_type or url.lower().endswith(".pdf"):
            if self.pdf_hook is None:
                raise BackendError(f"no PDF extraction hook configured for {url}")
            return self.pdf_hook(body)
        return html_to_text(body.decode("utf-8", errors="replace"))


# --------------------------------------------------------------------------
# blocklist


def host_blocked(url: str, blocklist: tuple[str, ...] | list[str]) -> bool:
    """Suffix match on the registered domain of the URL's host."""
    host = (urlparse(url).hostname or "").lower()
    for domain in blocklist:
        domain = domain.lower()
        if host == domain or host.endswith("." + domain):
            return True
    return False


def filter_blocked(hits: list[SearchHit], blocklist) -> list[SearchHit]:
    return [h for h in hits if not host_blocked(h.url, blocklist)]


# --------------------------------------------------------------------------
# call plumbing: budget, trace, retries


@dataclass
class Budget:
    max_calls: int = 60
    max_tokens: int = 200_000
    calls: int = 0
    tokens: int = 0

    def check_call(self) -> None:
        if self.calls + 1 > self.max_calls:
            raise BudgetExceeded(f"call cap of {self.max_calls} reached")
        if self.tokens > self.max_tokens:
            raise BudgetExceeded(f"token cap of {self.max_tokens} exceeded")
        self.calls += 1

    def add_tokens(self, *texts: str) -> None:
        # whitespace token count is a deliberate approximation
        self.tokens += sum(len(t.split()) for t in texts)


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    base_delay: float = 0.1
    multiplier: float = 2.0

    def delay(self, attempt: int) -> float:
        return self.base_delay * (self.multiplier ** attempt)


def request_hash(request: ChatRequest) -> str:
    blob = "\x00".join([request.tag, request.system_message, request.user_message,
                        repr(request.temperature), repr(request.max_tokens)])
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class TraceLog:
    """Append-only JSONL call log; appends are serialized by a lock.

    ``trace_ref`` is a digest over (tag, request hash, outcome) only, so two
    identically scripted runs share the same reference even though latencies
    differ.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        self._lock = threading.Lock()
        self._digest = hashlib.sha256()

    def append(self, tag: str, req_hash: str, latency_ms: float, outcome: str) -> None:
        record = {"tag": tag, "request_hash": req_hash,
                  "latency_ms": round(latency_ms, 3), "outcome": outcome}
        with self._lock:
            self.records.append(record)
            self._digest.update(f"{tag}|{req_hash}|{outcome}\n".encode("utf-8"))
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")

    @property
    def trace_ref(self) -> str:
        return "tr-" + self._digest.hexdigest()[:16]


class ChatClient:
    """Chat backend wrapper adding retries, budget enforcement and tracing."""

    def __init__(self, backend: ChatBackend, trace: TraceLog | None = None,
                 budget: Budget | None = None, retry: RetryPolicy = RetryPolicy()):
        self.backend = backend
        self.trace = trace if trace is not None else TraceLog()
        self.budget = budget if budget is not None else Budget()
        self.retry = retry

    def generate(self, request: ChatRequest) -> str:
        self.budget.check_call()
        req_hash = request_hash(request)
        for attempt in range(self.retry.max_retries + 1):
            start = time.monotonic()
            try:
                text = self.backend.generate(request)
            except TransientBackendError:
                self.trace.append(request.tag, req_hash,
                                  (time.monotonic() - start) * 1000, "transient_error")
                if attempt == self.retry.max_retries:
                    raise BackendUnavailable(
                        f"backend still failing after {self.retry.max_retries} retries") from None
                time.sleep(self.retry.delay(attempt))
                continue
            self.trace.append(request.tag, req_hash,
                              (time.monotonic() - start) * 1000, "ok")
            self.budget.add_tokens(request.system_message, request.user_message, text)
            return text
        raise AssertionError("unreachable")


class EmbeddingClient:
    def __init__(self, backend: EmbeddingBackend, trace: TraceLog | None = None,
                 retry: RetryPolicy = RetryPolicy()):
        self.backend = backend
        self.trace = trace if trace is not None else TraceLog()
        self.retry = retry

    def embed(self, text: str) -> EmbeddingVector:
        req_hash = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
        for attempt in range(self.retry.max_retries + 1):
            start = time.monotonic()
            try:
                vector = self.backend.embed(text)
            except TransientBackendError:
                self.trace.append("embed", req_hash,
                                  (time.monotonic() - start) * 1000, "transient_error")
                if attempt == self.retry.max_retries:
                    raise BackendUnavailable("embedding backend unavailable") from None
                time.sleep(self.retry.delay(attempt))
                continue
            self.trace.append("embed", req_hash, (time.monotonic() - start) * 1000, "ok")
            return vector
        raise AssertionError("unreachable")


class SearchClient:
    """Search wrapper that strips blocklisted hosts before anything downstream."""

    def __init__(self, backend: SearchBackend, blocklist=DEFAULT_BLOCKLIST,
                 trace: TraceLog | None = None):
        self.backend = backend
        self.blocklist = tuple(blocklist)
        self.trace = trace if trace is not None else TraceLog()

    def search(self, query: str) -> list[SearchHit]:
        if not query:
            raise ValueError("query must be non-empty")
        req_hash = hashlib.sha256(query.encode("utf-8")).hexdigest()[:16]
        start = time.monotonic()
        try:
            hits = self.backend.search(query)
        except TransientBackendError:
            self.trace.append("search", req_hash, (time.monotonic() - start) * 1000,
                              "transient_error")
            raise BackendUnavailable("search backend unavailable") from None
        self.trace.append("search", req_hash, (time.monotonic() - start) * 1000, "ok")
        return filter_blocked(hits, self.blocklist)
