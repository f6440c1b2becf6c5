import json
import random

import pytest

from contregen.corpus import CorpusStore, Passage
from contregen.errors import (
    CacheCorruptionError,
    DataError,
    ReplayMissError,
    RetrieverUnavailableError,
)
from contregen.retrieval import (
    LexicalIndex,
    RemoteRetriever,
    RetrievalCache,
    RetrieverHandle,
    cached_retrieve,
    normalize_query,
    tokenize,
)

from oracles import bm25_rank


def _store(texts: dict) -> CorpusStore:
    store = CorpusStore()
    for pid in texts:
        store.add(Passage(id=pid, text=texts[pid], meta={}))
    return store


def test_tokenize():
    assert tokenize("Hello, World! x9") == ["hello", "world", "x9"]
    assert tokenize("don't-stop") == ["don", "t", "stop"]
    assert tokenize("   ") == []


def test_normalize_query():
    assert normalize_query("  The   CAT \n sat ") == "the cat sat"


def test_empty_corpus_rejected():
    with pytest.raises(DataError):
        LexicalIndex(CorpusStore())


def test_ranking_matches_oracle_small():
    texts = {
        "p1": "the cat sat on the mat",
        "p2": "a dog chased the cat",
        "p3": "entirely unrelated content here",
        "p4": "cat cat cat everywhere",
    }
    index = LexicalIndex(_store(texts))
    for query in ("cat", "the cat mat", "dog chased", "nothing matches this"):
        for topk in (1, 2, 5):
            assert index.retrieve(query, topk).hits == tuple(
                bm25_rank(texts, query, topk))


def test_zero_score_documents_never_returned():
    index = LexicalIndex(_store({"p1": "alpha beta", "p2": "gamma delta"}))
    result = index.retrieve("alpha", 5)
    assert result.hit_ids() == ("p1",)
    assert index.retrieve("zeta", 5).hits == ()


def test_duplicate_query_terms_count_once():
    index = LexicalIndex(_store({"p1": "alpha beta", "p2": "alpha alpha"}))
    assert index.retrieve("alpha", 5).hits == index.retrieve("alpha alpha alpha", 5).hits


def test_ties_break_by_ascending_id():
    # identical texts give identical scores
    texts = {"z9": "same words here", "a1": "same words here", "m5": "same words here"}
    index = LexicalIndex(_store(texts))
    assert index.retrieve("same words", 3).hit_ids() == ("a1", "m5", "z9")


def test_topk_prefix_property():
    texts = {f"p{i}": f"common term{i} filler" for i in range(8)}
    index = LexicalIndex(_store(texts))
    full = index.retrieve("common term3 term5", 8).hits
    for topk in range(1, 8):
        assert index.retrieve("common term3 term5", topk).hits == full[:topk]


def test_backend_call_counter():
    index = LexicalIndex(_store({"p1": "alpha"}))
    assert index.backend_calls == 0
    index.retrieve("alpha", 1)
    index.retrieve("alpha", 1)
    assert index.backend_calls == 2


def test_topk_must_be_positive():
    index = LexicalIndex(_store({"p1": "alpha"}))
    with pytest.raises(ValueError):
        index.retrieve("alpha", 0)


def test_cache_round_trip_and_persistence(tmp_path):
    index = LexicalIndex(_store({"p1": "alpha beta", "p2": "beta gamma"}))
    cache_path = tmp_path / "ret.jsonl"
    cache = RetrievalCache(cache_path)
    first = cached_retrieve(cache, index, "beta", 2)
    assert index.backend_calls == 1
    second = cached_retrieve(cache, index, "  BETA ", 2)  # normalized same key
    assert second.hits == first.hits
    assert index.backend_calls == 1  # served from cache

    reloaded = RetrievalCache(cache_path)
    third = cached_retrieve(reloaded, index, "beta", 2)
    assert third.hits == first.hits
    assert index.backend_calls == 1


def test_cache_key_distinguishes_topk_and_backend():
    assert RetrievalCache.key("lexical", "q", 3) != RetrievalCache.key("lexical", "q", 4)
    assert RetrievalCache.key("lexical", "q", 3) != RetrievalCache.key("remote:x", "q", 3)


def test_cache_corruption_is_loud(tmp_path):
    path = tmp_path / "ret.jsonl"
    path.write_text('{"key": "k", "hits": [["p1", 1.0]]}\ngarbage\n')
    with pytest.raises(CacheCorruptionError) as err:
        RetrievalCache(path)
    assert ":2:" in str(err.value)


def test_strict_replay_miss(tmp_path):
    index = LexicalIndex(_store({"p1": "alpha"}))
    cache = RetrievalCache(tmp_path / "ret.jsonl")
    with pytest.raises(ReplayMissError):
        cached_retrieve(cache, index, "alpha", 1, strict=True)
    assert index.backend_calls == 0


class _FakeResponse:
    def __init__(self, status_code, payload):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if isinstance(self._payload, Exception):
            raise self._payload
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        reply = self.responses.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def test_remote_retriever_parses_hits(monkeypatch):
    session = _FakeSession([_FakeResponse(200, [{"id": "p9", "score": 2.5}])])
    remote = RemoteRetriever("http://retriever.test/search", token="tok",
                             session=session)
    result = remote.retrieve("a query", 3)
    assert result.hits == (("p9", 2.5),)
    assert result.backend == "remote:http://retriever.test/search"
    sent = session.requests[0]
    assert sent["json"] == {"query": "a query", "topk": 3}
    assert sent["headers"]["Authorization"] == "Bearer tok"


def test_remote_retriever_retries_then_fails(monkeypatch):
    import contregen.retrieval as retrieval_module
    monkeypatch.setattr(retrieval_module.time, "sleep", lambda s: None)
    session = _FakeSession([_FakeResponse(503, {}), _FakeResponse(503, {}),
                            _FakeResponse(503, {})])
    remote = RemoteRetriever("http://retriever.test", session=session, max_retries=3)
    with pytest.raises(RetrieverUnavailableError):
        remote.retrieve("q", 1)
    assert len(session.requests) == 3


def test_remote_retriever_bad_payload(monkeypatch):
    import contregen.retrieval as retrieval_module
    monkeypatch.setattr(retrieval_module.time, "sleep", lambda s: None)
    session = _FakeSession([_FakeResponse(200, {"unexpected": True})])
    remote = RemoteRetriever("http://retriever.test", session=session)
    with pytest.raises(RetrieverUnavailableError):
        remote.retrieve("q", 1)


def test_handle_records_calls_and_resolves_text():
    store = _store({"p1": "alpha beta", "p2": "beta gamma"})
    recorded = []
    handle = RetrieverHandle(LexicalIndex(store), store, on_call=recorded.append)
    result = handle.retrieve("beta", 2)
    assert handle.text("p1") == "alpha beta"
    assert [p.id for p in handle.passages(["p2", "p1"])] == ["p2", "p1"]
    assert len(recorded) == 1
    assert recorded[0].query == "beta"
    assert recorded[0].topk == 2
    assert recorded[0].hit_ids == result.hit_ids()
    assert recorded[0].backend == "lexical"
