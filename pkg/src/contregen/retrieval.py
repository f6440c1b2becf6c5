"""Top-k passage retrieval: embedded BM25 index, remote client, cache.

The lexical backend is fully deterministic: a fixed tokenizer (lowercase,
ascii-alphanumeric runs), BM25 with k1=1.2, b=0.75, idf =
ln(1 + (N - df + 0.5) / (df + 0.5)), duplicate query terms counted once in
first-occurrence order, ties broken by ascending passage id. Only passages
scoring > 0 are returned, so a query with no term overlap yields no hits.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
import time
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol

import requests

from contregen._kernels import bm25_accumulate
from contregen.corpus import CorpusStore, Passage
from contregen.errors import (
    CacheCorruptionError,
    DataError,
    ReplayMissError,
    RetrieverUnavailableError,
)

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into ascii-alphanumeric runs (punctuation acts as whitespace)."""
    return _TOKEN_RE.findall(text.lower())


def normalize_query(query_text: str) -> str:
    """Cache normalization: strip, collapse whitespace, lowercase."""
    return " ".join(query_text.lower().split())


@dataclass(frozen=True)
class RetrieverConfig:
    topk: int = 5
    backend: str = "lexical"  # or "remote"
    remote_endpoint: Optional[str] = None

    def __post_init__(self) -> None:
        if self.topk < 1:
            raise ValueError("topk must be >= 1")
        if self.backend not in ("lexical", "remote"):
            raise ValueError(f"unknown retrieval backend: {self.backend}")


@dataclass(frozen=True)
class RetrievalResult:
    query_text: str
    hits: tuple[tuple[str, float], ...]
    backend: str

    def hit_ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _ in self.hits)


@dataclass(frozen=True)
class RetrievalCall:
    """One logical retrieval as recorded in a trace."""

    query: str
    topk: int
    hit_ids: tuple[str, ...]
    backend: str


class Retriever(Protocol):
    backend_id: str
    backend_calls: int

    def retrieve(self, query_text: str, topk: int) -> RetrievalResult: ...


class LexicalIndex:
    """Inverted BM25 index over a corpus; immutable after build.

    Internal document indices are assigned in ascending passage-id order, so
    sorting candidates by (-score, index) realizes the id tie-break.
    """

    backend_id = "lexical"

    def __init__(self, corpus: CorpusStore) -> None:
        if len(corpus) == 0:
            raise DataError("cannot build an index over an empty corpus")
        self._corpus = corpus
        self.doc_ids: list[str] = sorted(corpus.ids())
        self.backend_calls = 0

        lens = array("i")
        postings_tmp: dict[str, tuple[list[int], list[int]]] = {}
        for index, pid in enumerate(self.doc_ids):
            tokens = tokenize(corpus.text(pid))
            lens.append(len(tokens))
            counts: dict[str, int] = {}
            for token in tokens:
                counts[token] = counts.get(token, 0) + 1
            for term, tf in counts.items():
                bucket = postings_tmp.setdefault(term, ([], []))
                bucket[0].append(index)
                bucket[1].append(tf)
        self._doc_lens = lens
        self._postings: dict[str, tuple[array, array]] = {
            term: (array("i", docs), array("i", tfs))
            for term, (docs, tfs) in postings_tmp.items()
        }
        self.doc_count = len(self.doc_ids)
        self.avgdl = sum(lens) / self.doc_count

    @property
    def term_count(self) -> int:
        return len(self._postings)

    def df(self, term: str) -> int:
        bucket = self._postings.get(term)
        return len(bucket[0]) if bucket else 0

    def retrieve(self, query_text: str, topk: int) -> RetrievalResult:
        if topk < 1:
            raise ValueError("topk must be >= 1")
        self.backend_calls += 1
        seen: set[str] = set()
        scores = array("d", [0.0]) * self.doc_count
        for term in tokenize(query_text):
            if term in seen:
                continue
            seen.add(term)
            bucket = self._postings.get(term)
            if bucket is None:
                continue
            doc_indices, tfs = bucket
            df = len(doc_indices)
            idf = math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))
            bm25_accumulate(scores, doc_indices, tfs, self._doc_lens,
                            idf, BM25_K1, BM25_B, self.avgdl)
        candidates = [i for i in range(self.doc_count) if scores[i] > 0.0]
        candidates.sort(key=lambda i: (-scores[i], i))
        hits = tuple((self.doc_ids[i], scores[i]) for i in candidates[:topk])
        return RetrievalResult(query_text=query_text, hits=hits, backend=self.backend_id)


def build_index(corpus: CorpusStore) -> LexicalIndex:
    return LexicalIndex(corpus)


class RemoteRetriever:
    """Client for a remote dense retriever: POST {query, topk} -> [{id, score}].

    The auth token, when required, comes from the environment (never from
    configuration files).
    """

    def __init__(self, endpoint: str, token: Optional[str] = None,
                 timeout: float = 30.0, max_retries: int = 3,
                 session: Optional[requests.Session] = None) -> None:
        self.endpoint = endpoint
        self.backend_id = f"remote:{endpoint}"
        self.backend_calls = 0
        self._token = token
        self._timeout = timeout
        self._max_retries = max_retries
        self._session = session or requests.Session()

    def retrieve(self, query_text: str, topk: int) -> RetrievalResult:
        if topk < 1:
            raise ValueError("topk must be >= 1")
        self.backend_calls += 1
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        last_error: Optional[str] = None
        for attempt in range(self._max_retries):
            try:
                response = self._session.post(
                    self.endpoint,
                    json={"query": query_text, "topk": topk},
                    headers=headers,
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if response.status_code == 200:
                    return self._parse(query_text, response)
                last_error = f"HTTP {response.status_code}"
                if response.status_code not in (429, 500, 502, 503, 504):
                    break
            time.sleep(0.5 * 2 ** attempt)
        raise RetrieverUnavailableError(
            f"remote retriever {self.endpoint} unreachable: {last_error}")

    def _parse(self, query_text: str, response: requests.Response) -> RetrievalResult:
        try:
            payload = response.json()
        except ValueError as exc:
            raise RetrieverUnavailableError(
                f"remote retriever returned invalid JSON: {exc}") from exc
        items = payload.get("hits") if isinstance(payload, dict) else payload
        if not isinstance(items, list):
            raise RetrieverUnavailableError("remote retriever response is not a hit list")
        hits = tuple((str(item["id"]), float(item["score"])) for item in items)
        return RetrievalResult(query_text=query_text, hits=hits, backend=self.backend_id)


class RetrievalCache:
    """Append-only JSONL cache keyed by hash(backend-id, normalized query, topk)."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._entries: dict[str, tuple[tuple[str, float], ...]] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        key = entry["key"]
                        hits = tuple((str(i), float(s)) for i, s in entry["hits"])
                    except (ValueError, KeyError, TypeError) as exc:
                        raise CacheCorruptionError(
                            f"{self.path}:{line_no}: unreadable cache entry ({exc})")
                    self._entries[key] = hits

    @staticmethod
    def key(backend_id: str, query_text: str, topk: int) -> str:
        material = json.dumps([backend_id, normalize_query(query_text), topk])
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def get(self, key: str) -> Optional[tuple[tuple[str, float], ...]]:
        return self._entries.get(key)

    def put(self, key: str, query_text: str, topk: int, backend_id: str,
            hits: tuple[tuple[str, float], ...]) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = hits
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "key": key,
                    "backend": backend_id,
                    "query": query_text,
                    "topk": topk,
                    "hits": [[pid, score] for pid, score in hits],
                }, ensure_ascii=False))
                fh.write("\n")


def cached_retrieve(cache: RetrievalCache, backend: Retriever, query_text: str,
                    topk: int, strict: bool = False) -> RetrievalResult:
    """Serve from cache when possible; identical result either way.

    strict mode (replay) errors on a miss instead of touching the backend.
    """
    key = cache.key(backend.backend_id, query_text, topk)
    hits = cache.get(key)
    if hits is not None:
        return RetrievalResult(query_text=query_text, hits=hits,
                               backend=backend.backend_id)
    if strict:
        raise ReplayMissError(
            f"retrieval cache has no entry for query {query_text!r} (topk={topk})")
    result = backend.retrieve(query_text, topk)
    cache.put(key, query_text, topk, backend.backend_id, result.hits)
    return result


class RetrieverHandle:
    """What the engine components receive: retrieval plus passage-text lookup.

    Wraps a backend with the optional cache and a trace recorder; the remote
    backend returns ids only, so text always resolves against the local corpus.
    """

    def __init__(self, backend: Retriever, corpus: CorpusStore,
                 cache: Optional[RetrievalCache] = None,
                 on_call: Optional[Callable[[RetrievalCall], None]] = None,
                 strict_replay: bool = False) -> None:
        self.backend = backend
        self.corpus = corpus
        self.cache = cache
        self.on_call = on_call
        self.strict_replay = strict_replay

    def retrieve(self, query_text: str, topk: int) -> RetrievalResult:
        if self.cache is not None:
            result = cached_retrieve(self.cache, self.backend, query_text, topk,
                                     strict=self.strict_replay)
        else:
            result = self.backend.retrieve(query_text, topk)
        if self.on_call is not None:
            self.on_call(RetrievalCall(query=query_text, topk=topk,
                                       hit_ids=result.hit_ids(),
                                       backend=result.backend))
        return result

    def text(self, passage_id: str) -> str:
        return self.corpus.text(passage_id)

    def passages(self, passage_ids) -> list[Passage]:
        return [self.corpus.get(pid) for pid in passage_ids]


__all__ = [
    "BM25_B",
    "BM25_K1",
    "LexicalIndex",
    "RemoteRetriever",
    "RetrievalCache",
    "RetrievalCall",
    "RetrievalResult",
    "Retriever",
    "RetrieverConfig",
    "RetrieverHandle",
    "build_index",
    "cached_retrieve",
    "normalize_query",
    "tokenize",
]
