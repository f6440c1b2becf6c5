"""Prompted-generation gateway: roles, templates, adapters, replay cache.

Every generation call goes through one funnel, LlmGateway.complete, which
renders the role template, invokes the adapter, and records a logical call
with its tree location. Adapters carry a physical invocation counter
(backend_calls) so replay can prove it touched no backend.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol

import requests

from contregen.errors import (
    CacheCorruptionError,
    ConfigError,
    FixtureMissError,
    LlmBackendError,
    ReplayMissError,
    TemplateRenderError,
)

logger = logging.getLogger(__name__)


class PromptRole(str, enum.Enum):
    PLAN = "plan"
    NECESSITY = "necessity"
    REWRITE = "rewrite"
    RELEVANCE = "relevance"
    SUMMARIZE_LEAF = "summarize_leaf"
    MERGE_INTERMEDIATE = "merge_intermediate"
    GENERATE_ROOT = "generate_root"
    BASELINE_GENERATE = "baseline_generate"
    BASELINE_FOLLOWUP = "baseline_followup"


# Slot whose value identifies a call for fixture lookup and trace grouping.
KEY_SLOT: dict[PromptRole, str] = {
    PromptRole.PLAN: "query",
    PromptRole.NECESSITY: "subquestion",
    PromptRole.REWRITE: "subquestion",
    PromptRole.RELEVANCE: "subquestion",
    PromptRole.SUMMARIZE_LEAF: "query",
    PromptRole.MERGE_INTERMEDIATE: "query",
    PromptRole.GENERATE_ROOT: "query",
    PromptRole.BASELINE_GENERATE: "query",
    PromptRole.BASELINE_FOLLOWUP: "query",
}

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_EXEMPLAR_SEPARATOR = "=== example ==="
_TASK_SEPARATOR = "=== task ==="


@dataclass(frozen=True)
class PromptTemplate:
    """A role's prompt text with {slot} placeholders and a one-shot exemplar.

    Substitution is a single regex pass, so braces inside slot values (which
    come from arbitrary passage text) are never re-interpreted.
    """

    role: PromptRole
    text: str

    def slot_names(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER_RE.findall(self.text))

    @property
    def one_shot_exemplar(self) -> Optional[str]:
        if _EXEMPLAR_SEPARATOR not in self.text:
            return None
        after = self.text.split(_EXEMPLAR_SEPARATOR, 1)[1]
        if _TASK_SEPARATOR in after:
            after = after.split(_TASK_SEPARATOR, 1)[0]
        return after.strip()

    def render(self, slots: Mapping[str, str]) -> str:
        def fill(match: re.Match) -> str:
            name = match.group(1)
            if name not in slots:
                raise TemplateRenderError(self.role.value, name)
            return str(slots[name])

        return _PLACEHOLDER_RE.sub(fill, self.text)


def load_templates(override_dir: Optional[str | Path] = None) -> dict[PromptRole, PromptTemplate]:
    """Load the packaged template assets, any of which an override dir may replace."""
    templates: dict[PromptRole, PromptTemplate] = {}
    asset_root = files("contregen") / "templates"
    for role in PromptRole:
        text = (asset_root / f"{role.value}.txt").read_text(encoding="utf-8")
        templates[role] = PromptTemplate(role=role, text=text)
    if override_dir is not None:
        override = Path(override_dir)
        if not override.is_dir():
            raise ConfigError(f"template override dir does not exist: {override}")
        for role in PromptRole:
            candidate = override / f"{role.value}.txt"
            if candidate.exists():
                templates[role] = PromptTemplate(
                    role=role, text=candidate.read_text(encoding="utf-8"))
    return templates


class Adapter(Protocol):
    adapter_id: str
    backend_calls: int

    def complete(self, role: PromptRole, prompt: str, slots: Mapping[str, str]) -> str: ...


class ScriptedAdapter:
    """Deterministic adapter fed from a fixture table: role -> key -> response.

    The key is the value of the role's key slot. A response may be a single
    string or a list consumed in call order (for iterative baselines). Any
    miss, including list exhaustion, is a hard error rather than a fallback.
    """

    adapter_id = "scripted"

    def __init__(self, fixtures: Mapping[str, Mapping[str, object]]) -> None:
        for role_name in fixtures:
            PromptRole(role_name)  # reject unknown role keys up front
        self._fixtures = {role: dict(table) for role, table in fixtures.items()}
        self._cursors: dict[tuple[str, str], int] = {}
        self.backend_calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedAdapter":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, role: PromptRole, prompt: str, slots: Mapping[str, str]) -> str:
        self.backend_calls += 1
        key = str(slots.get(KEY_SLOT[role], ""))
        table = self._fixtures.get(role.value)
        value = table.get(key) if table is not None else None
        if value is None:
            raise FixtureMissError(
                f"no fixture for role {role.value!r} with key {key!r}")
        if isinstance(value, list):
            cursor = self._cursors.get((role.value, key), 0)
            if cursor >= len(value):
                raise FixtureMissError(
                    f"fixture list for role {role.value!r} key {key!r} exhausted "
                    f"after {len(value)} responses")
            self._cursors[(role.value, key)] = cursor + 1
            return str(value[cursor])
        return str(value)


class OpenAiChatAdapter:
    """Chat-completions client pinned to deterministic settings.

    temperature 0, 1024 max new tokens; the API key comes from the
    environment via the caller, never from config files.
    """

    def __init__(self, model: str, api_key: str,
                 endpoint: str = "https://api.openai.com/v1/chat/completions",
                 max_retries: int = 3, timeout: float = 120.0,
                 session: Optional[requests.Session] = None) -> None:
        self.model = model
        self.adapter_id = f"openai:{model}"
        self.backend_calls = 0
        self._api_key = api_key
        self._endpoint = endpoint
        self._max_retries = max_retries
        self._timeout = timeout
        self._session = session or requests.Session()

    def complete(self, role: PromptRole, prompt: str, slots: Mapping[str, str]) -> str:
        self.backend_calls += 1
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
            "max_tokens": 1024,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_error: Optional[str] = None
        for attempt in range(self._max_retries):
            try:
                response = self._session.post(self._endpoint, json=payload,
                                              headers=headers, timeout=self._timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
            else:
                if response.status_code == 200:
                    try:
                        return response.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError) as exc:
                        raise LlmBackendError(
                            f"malformed completion response: {exc}") from exc
                last_error = f"HTTP {response.status_code}"
                if response.status_code not in (429, 500, 502, 503, 504):
                    break
            time.sleep(0.5 * 2 ** attempt)
        raise LlmBackendError(f"generation backend failed ({role.value}): {last_error}")


class LlmCache:
    """Append-only JSONL cache keyed by hash(adapter-id, role, full prompt)."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        self._entries[entry["key"]] = str(entry["response"])
                    except (ValueError, KeyError, TypeError) as exc:
                        raise CacheCorruptionError(
                            f"{self.path}:{line_no}: unreadable cache entry ({exc})")

    @staticmethod
    def key(adapter_id: str, role: str, prompt: str) -> str:
        material = json.dumps([adapter_id, role, prompt], ensure_ascii=True)
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def get(self, key: str) -> Optional[str]:
        return self._entries.get(key)

    def put(self, key: str, role: str, prompt: str, response: str) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "role": role, "prompt": prompt,
                                     "response": response}, ensure_ascii=False))
                fh.write("\n")


class CachingAdapter:
    """Wraps an adapter with the replay cache; strict mode forbids misses."""

    def __init__(self, inner: Adapter, cache: LlmCache, strict: bool = False) -> None:
        self.inner = inner
        self.cache = cache
        self.strict = strict
        self.adapter_id = inner.adapter_id

    @property
    def backend_calls(self) -> int:
        return self.inner.backend_calls

    def complete(self, role: PromptRole, prompt: str, slots: Mapping[str, str]) -> str:
        key = self.cache.key(self.adapter_id, role.value, prompt)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.strict:
            raise ReplayMissError(
                f"generation cache has no entry for role {role.value}")
        response = self.inner.complete(role, prompt, slots)
        self.cache.put(key, role.value, prompt, response)
        return response


@dataclass(frozen=True)
class LlmCall:
    """One logical generation call as recorded in a trace."""

    role: str
    prompt: str
    response: str
    node_path: str
    approx_tokens: int


class LlmGateway:
    """Single funnel for generation: render template, call adapter, record."""

    def __init__(self, adapter: Adapter,
                 templates: Optional[Mapping[PromptRole, PromptTemplate]] = None,
                 on_call: Optional[Callable[[LlmCall], None]] = None) -> None:
        self.adapter = adapter
        self.templates = dict(templates) if templates is not None else load_templates()
        self.on_call = on_call
        self.calls: list[LlmCall] = []

    def complete(self, role: PromptRole, slots: Mapping[str, str],
                 node_path: str = "") -> str:
        prompt = self.templates[role].render(slots)
        response = self.adapter.complete(role, prompt, slots)
        call = LlmCall(role=role.value, prompt=prompt, response=response,
                       node_path=node_path,
                       approx_tokens=math.ceil((len(prompt) + len(response)) / 4))
        self.calls.append(call)
        if self.on_call is not None:
            self.on_call(call)
        return response


def count_calls(calls) -> dict[str, int]:
    """Per-role call counts plus a total, from an iterable of LlmCall."""
    counts = {role.value: 0 for role in PromptRole}
    total = 0
    for call in calls:
        counts[call.role] = counts.get(call.role, 0) + 1
        total += 1
    counts["total"] = total
    return counts


__all__ = [
    "Adapter",
    "CachingAdapter",
    "KEY_SLOT",
    "LlmCache",
    "LlmCall",
    "LlmGateway",
    "OpenAiChatAdapter",
    "PromptRole",
    "PromptTemplate",
    "ScriptedAdapter",
    "count_calls",
    "load_templates",
]
