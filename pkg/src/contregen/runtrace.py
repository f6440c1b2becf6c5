"""Run configuration, deterministic traces, persistence, replay, diffing.

A trace records every logical generation and retrieval call with enough
context to re-run or audit a run. Serialization is canonical (sorted keys,
fixed separators, ascii) so equal runs produce byte-identical files.
Physical backend invocation counts live on the backend objects, never in
the trace: a warm-cache rerun must serialize identically to the original.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import yaml

from contregen import baselines
from contregen.corpus import CorpusStore, QueryRecord, ingest_corpus, load_queries, validate_queries
from contregen.errors import ConfigError, ContregenError, DataError
from contregen.llm import (
    Adapter,
    CachingAdapter,
    LlmCache,
    LlmCall,
    LlmGateway,
    OpenAiChatAdapter,
    ScriptedAdapter,
    load_templates,
)
from contregen.metrics import evaluate_run, to_structured
from contregen.retrieval import (
    LexicalIndex,
    RemoteRetriever,
    RetrievalCache,
    RetrievalCall,
    RetrieverHandle,
)
from contregen.synthesis import SUMMARY_CHAR_BUDGET, synthesize
from contregen.tree import TreeConfig, build_tree, collect_passages, export_tree

logger = logging.getLogger(__name__)

_METHODS = ("contregen", "retgen", "iterretgen", "selfask")

_NODE_PATH_RE = re.compile(r"^$|^0(\.\d+)*$|^(retgen|iterretgen|selfask)(\.(\d+|final))?$")


@dataclass(frozen=True)
class RunConfig:
    method: str = "contregen"
    corpus_path: str = ""
    queries_path: str = ""
    out_dir: str = "runs/out"
    topk: int = 5
    max_depth: int = 2
    max_plan_size: int = 5
    dedup_passages: bool = True
    max_iterations: int = 5
    char_budget: int = SUMMARY_CHAR_BUDGET
    adapter: str = "scripted"            # scripted | openai
    fixtures_path: Optional[str] = None
    model: str = ""
    retriever_backend: str = "lexical"   # lexical | remote
    remote_endpoint: Optional[str] = None
    template_dir: Optional[str] = None
    cache_dir: Optional[str] = None
    replay: bool = False                 # strict: any cache miss is an error
    parallel: int = 1
    seed_tag: str = ""

    def validate(self) -> None:
        if self.method not in _METHODS:
            raise ConfigError(f"unknown method: {self.method}")
        if self.adapter not in ("scripted", "openai"):
            raise ConfigError(f"unknown adapter: {self.adapter}")
        if self.retriever_backend not in ("lexical", "remote"):
            raise ConfigError(f"unknown retriever backend: {self.retriever_backend}")
        if self.adapter == "scripted" and not self.fixtures_path:
            raise ConfigError("scripted adapter needs fixtures_path")
        if self.adapter == "openai" and not self.model:
            raise ConfigError("openai adapter needs a model name")
        if self.retriever_backend == "remote" and not self.remote_endpoint:
            raise ConfigError("remote retriever needs remote_endpoint")
        for name in ("topk", "max_depth", "max_plan_size", "max_iterations",
                     "char_budget", "parallel"):
            value = getattr(self, name)
            floor = 0 if name == "max_depth" else 1
            if not isinstance(value, int) or value < floor:
                raise ConfigError(f"{name} must be an integer >= {floor}")

    def snapshot(self) -> dict:
        """The part of the config that defines the experiment; execution
        details (replay, parallel) are excluded so a warm-cache rerun
        serializes identically."""
        data = dataclasses.asdict(self)
        data.pop("replay")
        data.pop("parallel")
        return data


def load_config(path: Optional[str] = None,
                overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Defaults, then the config file, then flag overrides."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        values.update(loaded)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    config = RunConfig(**values)
    config.validate()
    return config


@dataclass
class QueryRun:
    query_id: str
    method: str
    answer: str = ""
    retrieved_ids: tuple[str, ...] = ()
    llm_calls: list[LlmCall] = field(default_factory=list)
    retrieval_calls: list[RetrievalCall] = field(default_factory=list)
    tree: Optional[dict] = None
    rounds: Optional[list[list[str]]] = None
    error: Optional[str] = None


class RunTrace:
    """Append-only while running; immutable once finalized."""

    def __init__(self, config: RunConfig) -> None:
        self.config_snapshot = config.snapshot()
        self.queries: dict[str, QueryRun] = {}
        self.report: Optional[dict] = None
        self.finalized = False
        # physical counters, deliberately not serialized
        self.backend_stats: dict[str, int] = {}

    def add_query(self, run: QueryRun) -> None:
        if self.finalized:
            raise DataError("trace is finalized")
        if run.query_id in self.queries:
            raise DataError(f"duplicate query section: {run.query_id}")
        for call in run.llm_calls:
            if not _NODE_PATH_RE.match(call.node_path):
                raise DataError(f"bad node path in trace: {call.node_path!r}")
        self.queries[run.query_id] = run

    def finalize(self, report: Optional[dict]) -> None:
        if self.finalized:
            raise DataError("trace already finalized")
        self.report = report
        self.finalized = True

    def to_dict(self) -> dict:
        return {
            "config": self.config_snapshot,
            "queries": {
                qid: {
                    "method": q.method,
                    "answer": q.answer,
                    "retrieved_ids": list(q.retrieved_ids),
                    "llm_calls": [dataclasses.asdict(c) for c in q.llm_calls],
                    "retrieval_calls": [
                        {"query": c.query, "topk": c.topk,
                         "hit_ids": list(c.hit_ids), "backend": c.backend}
                        for c in q.retrieval_calls
                    ],
                    "tree": q.tree,
                    "rounds": q.rounds,
                    "error": q.error,
                }
                for qid, q in sorted(self.queries.items())
            },
            "report": self.report,
        }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_adapter(config: RunConfig) -> Adapter:
    if config.adapter == "scripted":
        return ScriptedAdapter.from_file(config.fixtures_path)
    api_key = os.environ.get("OPENAI_API_KEY", "")
    if not api_key:
        raise ConfigError("openai adapter needs OPENAI_API_KEY in the environment")
    return OpenAiChatAdapter(model=config.model, api_key=api_key)


def _build_backend(config: RunConfig, store: CorpusStore):
    if config.retriever_backend == "lexical":
        return LexicalIndex(store)
    token = os.environ.get("CONTREGEN_RETRIEVER_TOKEN")
    return RemoteRetriever(config.remote_endpoint, token=token)


def _run_one(config: RunConfig, record: QueryRecord, adapter: Adapter,
             backend, store: CorpusStore, templates,
             retrieval_cache: Optional[RetrievalCache]) -> QueryRun:
    section = QueryRun(query_id=record.id, method=config.method)
    gateway = LlmGateway(adapter, templates, on_call=section.llm_calls.append)
    handle = RetrieverHandle(backend, store, cache=retrieval_cache,
                             on_call=section.retrieval_calls.append,
                             strict_replay=config.replay)
    try:
        if config.method == "contregen":
            tree_config = TreeConfig(max_depth=config.max_depth,
                                     max_plan_size=config.max_plan_size,
                                     topk=config.topk,
                                     dedup_passages=config.dedup_passages)
            root = build_tree(gateway, handle, record.query, tree_config)
            result = synthesize(gateway, root, handle.text,
                                char_budget=config.char_budget)
            section.answer = result.answer
            section.retrieved_ids = tuple(
                collect_passages(root, dedup=config.dedup_passages))
            section.tree = export_tree(root)
        else:
            if config.method == "retgen":
                run = baselines.run_retgen(gateway, handle, record.query, config.topk)
            elif config.method == "iterretgen":
                run = baselines.run_iterretgen(gateway, handle, record.query,
                                               config.topk, config.max_iterations)
            else:
                run = baselines.run_selfask(gateway, handle, record.query,
                                            config.topk, config.max_iterations)
            section.answer = run.answer
            section.retrieved_ids = run.retrieved_ids
            section.rounds = [list(state.accumulated_ids) for state in run.rounds]
    except ContregenError as exc:
        logger.error("query %s failed: %s", record.id, exc)
        section.error = f"{type(exc).__name__}: {exc}"
    return section


def run(config: RunConfig) -> RunTrace:
    """Execute the configured method over every query and persist artifacts.

    Per-query failures are recorded in the trace and the run continues;
    only configuration problems abort.
    """
    config.validate()
    required = ["corpus_path", "queries_path"]
    if config.adapter == "scripted":
        required.append("fixtures_path")
    for path_name in required:
        value = getattr(config, path_name)
        if not value or not Path(value).exists():
            raise ConfigError(f"{path_name} does not exist: {value!r}")

    store = ingest_corpus(config.corpus_path)
    records = load_queries(config.queries_path)
    validate_queries(records, store)
    templates = load_templates(config.template_dir)

    adapter = _build_adapter(config)
    backend = _build_backend(config, store)
    retrieval_cache = None
    if config.cache_dir:
        cache_dir = Path(config.cache_dir)
        retrieval_cache = RetrievalCache(cache_dir / "retrieval.jsonl")
        adapter = CachingAdapter(adapter, LlmCache(cache_dir / "llm.jsonl"),
                                 strict=config.replay)
    elif config.replay:
        raise ConfigError("replay mode needs cache_dir")

    trace = RunTrace(config)
    ordered = sorted(records, key=lambda r: r.id)
    if config.parallel > 1:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            sections = list(pool.map(
                lambda rec: _run_one(config, rec, adapter, backend, store,
                                     templates, retrieval_cache),
                ordered))
    else:
        sections = [_run_one(config, rec, adapter, backend, store,
                             templates, retrieval_cache)
                    for rec in ordered]
    for section in sections:
        trace.add_query(section)

    answers = {qid: q.answer for qid, q in trace.queries.items() if q.error is None}
    retrieved = {qid: q.retrieved_ids for qid, q in trace.queries.items()}
    report = to_structured(evaluate_run(records, answers, retrieved))
    trace.finalize(report)
    trace.backend_stats = {
        "llm_backend_calls": adapter.backend_calls,
        "retrieval_backend_calls": backend.backend_calls,
    }

    out_dir = Path(config.out_dir)
    atomic_write(out_dir / "trace.json", canonical_json(trace.to_dict()) + "\n")
    atomic_write(out_dir / "report.json", canonical_json(report) + "\n")
    outputs = "".join(
        canonical_json({"id": qid, "answer": q.answer, "error": q.error}) + "\n"
        for qid, q in sorted(trace.queries.items()))
    atomic_write(out_dir / "outputs.jsonl", outputs)
    return trace


def load_trace(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"trace file not found: {path}")
    except ValueError as exc:
        raise DataError(f"trace file {path} is not valid JSON: {exc}")


def _as_dict(trace) -> dict:
    return trace.to_dict() if isinstance(trace, RunTrace) else trace


def diff_traces(a, b) -> list[str]:
    """Human-readable structural differences; empty exactly when the
    canonical serializations are byte-identical."""
    da, db = _as_dict(a), _as_dict(b)
    if canonical_json(da) == canonical_json(db):
        return []
    diffs: list[str] = []
    if canonical_json(da.get("config")) != canonical_json(db.get("config")):
        diffs.append("config differs")
    qa, qb = da.get("queries", {}), db.get("queries", {})
    for qid in sorted(set(qa) | set(qb)):
        if qid not in qa or qid not in qb:
            where = "second" if qid not in qa else "first"
            diffs.append(f"query {qid}: only in {where} trace")
            continue
        sa, sb = qa[qid], qb[qid]
        if sa.get("answer") != sb.get("answer"):
            diffs.append(f"query {qid}: answer differs")
        calls_a, calls_b = sa.get("llm_calls", []), sb.get("llm_calls", [])
        if len(calls_a) != len(calls_b):
            diffs.append(f"query {qid}: {len(calls_a)} vs {len(calls_b)} llm calls")
        for index, (ca, cb) in enumerate(zip(calls_a, calls_b)):
            if ca != cb:
                diffs.append(
                    f"query {qid}: llm call {index} differs "
                    f"(role={ca.get('role')}, node_path={ca.get('node_path')})")
        ra, rb = sa.get("retrieval_calls", []), sb.get("retrieval_calls", [])
        if canonical_json(ra) != canonical_json(rb):
            diffs.append(f"query {qid}: retrieval calls differ")
        if canonical_json(sa.get("tree")) != canonical_json(sb.get("tree")):
            diffs.append(f"query {qid}: tree differs")
        if sa.get("rounds") != sb.get("rounds"):
            diffs.append(f"query {qid}: rounds differ")
        if sa.get("error") != sb.get("error"):
            diffs.append(f"query {qid}: error field differs")
    if canonical_json(da.get("report")) != canonical_json(db.get("report")):
        diffs.append("report differs")
    if not diffs:
        diffs.append("traces differ in serialization")
    return diffs


__all__ = [
    "QueryRun",
    "RunConfig",
    "RunTrace",
    "atomic_write",
    "canonical_json",
    "diff_traces",
    "load_config",
    "load_trace",
    "run",
]
