from __future__ import annotations

import json

import numpy as np
import pytest

from parareview.backends import (
    Budget,
    BudgetExceeded,
    BackendUnavailable,
    ChatClient,
    ChatRequest,
    EmbeddingClient,
    MockChatBackend,
    MockEmbeddingBackend,
    MockScript,
    MockSearchBackend,
    RetryPolicy,
    SearchClient,
    TraceLog,
    TransientBackendError,
    filter_blocked,
    host_blocked,
    request_hash,
)


def make_chat(script: MockScript, budget: Budget | None = None,
              trace: TraceLog | None = None) -> ChatClient:
    return ChatClient(MockChatBackend(script), trace=trace or TraceLog(None),
                      budget=budget or Budget(), retry=RetryPolicy(base_delay=0.0))


def test_mock_rule_matching_first_wins():
    script = MockScript.from_dict({"rules": [
        {"tag": "qa", "contains": "alpha", "response": "first"},
        {"tag": "qa", "response": "second"},
    ]})
    chat = make_chat(script)
    assert chat.generate(ChatRequest(system_message="", user_message="about alpha", tag="qa")) == "first"
    assert chat.generate(ChatRequest(system_message="", user_message="beta", tag="qa")) == "second"


def test_mock_rule_sequential_responses_last_repeats():
    script = MockScript.from_dict({"rules": [
        {"tag": "planner", "responses": ["one", "two"]},
    ]})
    chat = make_chat(script)
    req = ChatRequest(system_message="", user_message="go", tag="planner")
    assert [chat.generate(req) for _ in range(4)] == ["one", "two", "two", "two"]


def test_mock_default_when_nothing_matches():
    chat = make_chat(MockScript.from_dict({"rules": [], "default": "I don't know."}))
    assert chat.generate(ChatRequest(system_message="", user_message="x", tag="qa")) == "I don't know."


def test_transient_failures_then_success():
    script = MockScript.from_dict({"rules": [
        {"tag": "qa", "response": "ok", "transient_failures": 2},
    ]})
    chat = make_chat(script)
    assert chat.generate(ChatRequest(system_message="", user_message="x", tag="qa")) == "ok"


def test_transient_failures_exhaust_retries():
    script = MockScript.from_dict({"rules": [
        {"tag": "qa", "response": "ok", "transient_failures": 10},
    ]})
    chat = make_chat(script)
    with pytest.raises(BackendUnavailable):
        chat.generate(ChatRequest(system_message="", user_message="x", tag="qa"))


def test_budget_call_cap():
    budget = Budget(max_calls=2, max_tokens=10_000)
    chat = make_chat(MockScript.from_dict({"rules": [{"tag": "qa", "response": "ok"}]}),
                     budget=budget)
    req = ChatRequest(system_message="", user_message="x", tag="qa")
    chat.generate(req)
    chat.generate(req)
    with pytest.raises(BudgetExceeded):
        chat.generate(req)


def test_budget_token_cap_between_calls():
    budget = Budget(max_calls=100, max_tokens=5)
    chat = make_chat(MockScript.from_dict(
        {"rules": [{"tag": "qa", "response": "one two three four five six"}]}), budget=budget)
    req = ChatRequest(system_message="", user_message="hello there", tag="qa")
    chat.generate(req)  # first call may exceed; cap applies before the next
    with pytest.raises(BudgetExceeded):
        chat.generate(req)


def test_chat_request_requires_user_message():
    with pytest.raises(ValueError):
        ChatRequest(system_message="sys", user_message="")
    ChatRequest(system_message="", user_message="just user")  # no raise


def test_embedding_unit_norm_and_determinism():
    backend = MockEmbeddingBackend(dim=48)
    a = np.asarray(backend.embed("some text").values)
    b = np.asarray(backend.embed("some text").values)
    c = np.asarray(backend.embed("other text").values)
    assert a.shape == (48,)
    assert np.allclose(a, b)
    assert not np.allclose(a, c)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-9


def test_host_blocked_matches_domain_and_subdomains():
    assert host_blocked("https://openreview.net/forum?id=x", ("openreview.net",))
    assert host_blocked("https://www.openreview.net/x", ("openreview.net",))
    assert not host_blocked("https://notopenreview.net/x", ("openreview.net",))
    assert not host_blocked("https://example.org/openreview.net", ("openreview.net",))


def test_search_client_filters_blocklist():
    backend = MockSearchBackend({"queries": [{"contains": "", "hits": [
        {"url": "https://openreview.net/paper", "title": "a", "snippet": ""},
        {"url": "https://sub.peerj.com/article", "title": "b", "snippet": ""},
        {"url": "https://arxiv.example/abs/1", "title": "c", "snippet": ""},
    ]}]})
    client = SearchClient(backend, blocklist=("openreview.net", "peerj.com"), trace=TraceLog(None))
    hits = client.search("anything")
    assert [h.url for h in hits] == ["https://arxiv.example/abs/1"]


def test_filter_blocked_keeps_order():
    from parareview.backends import SearchHit

    hits = [SearchHit(url=f"https://ok{i}.example/x", title="", snippet="") for i in range(3)]
    assert filter_blocked(hits, ()) == hits


def test_mock_search_fetch_missing_page_is_transient():
    backend = MockSearchBackend({"pages": {}})
    with pytest.raises(TransientBackendError):
        backend.fetch("https://missing.example/x")


def test_request_hash_is_stable_and_sensitive():
    a = ChatRequest(system_message="s", user_message="u", tag="qa")
    b = ChatRequest(system_message="s", user_message="u", tag="qa")
    c = ChatRequest(system_message="s", user_message="u2", tag="qa")
    assert request_hash(a) == request_hash(b)
    assert request_hash(a) != request_hash(c)


def test_trace_log_and_ref_exclude_latency(tmp_path):
    path = tmp_path / "trace.jsonl"
    trace = TraceLog(path)
    trace.append("qa", "abc123", 12.5, "ok")
    trace.append("qa", "def456", 99.0, "ok")
    ref_a = trace.trace_ref

    other = TraceLog(tmp_path / "other.jsonl")
    other.append("qa", "abc123", 1.0, "ok")
    other.append("qa", "def456", 2.0, "ok")
    assert other.trace_ref == ref_a

    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0]["tag"] == "qa"
    assert rows[0]["latency_ms"] == 12.5
    assert set(rows[0]) == {"tag", "request_hash", "latency_ms", "outcome"}


def test_embedding_client_retries_transients():
    class FlakyEmbed:
        def __init__(self):
            self.calls = 0

        def embed(self, text):
            self.calls += 1
            if self.calls < 3:
                raise TransientBackendError("blip")
            return MockEmbeddingBackend(dim=8).embed(text)

    client = EmbeddingClient(FlakyEmbed(), trace=TraceLog(None), retry=RetryPolicy(base_delay=0.0))
    vec = client.embed("hello")
    assert len(vec.values) == 8


def test_retry_policy_delays_grow():
    policy = RetryPolicy(max_retries=3, base_delay=0.1, multiplier=2.0)
    assert policy.delay(0) == pytest.approx(0.1)
    assert policy.delay(1) == pytest.approx(0.2)
    assert policy.delay(2) == pytest.approx(0.4)
