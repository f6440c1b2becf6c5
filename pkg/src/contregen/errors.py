"""Exception taxonomy.

The CLI maps these onto its exit codes: ConfigError -> 1, DataError -> 2,
BackendError -> 3.
"""

from __future__ import annotations


class ContregenError(Exception):
    """Base class for all engine errors."""


class ConfigError(ContregenError):
    """Invalid run configuration or command usage."""


class DataError(ContregenError):
    """Malformed or inconsistent input files."""


class MalformedRecordError(DataError):
    def __init__(self, path: str, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class DuplicateIdError(DataError):
    def __init__(self, duplicate_id: str) -> None:
        super().__init__(f"duplicate id: {duplicate_id}")
        self.duplicate_id = duplicate_id


class CacheCorruptionError(DataError):
    """A cache file failed to parse; never silently recomputed."""


class BackendError(ContregenError):
    """A retrieval or generation backend failed."""


class RetrieverUnavailableError(BackendError):
    """Remote retriever unreachable after retries; retryable, distinct from an empty result."""


class LlmBackendError(BackendError):
    """Remote generation endpoint failed after bounded retries."""


class ReplayMissError(BackendError):
    """Strict replay requested but the cache has no entry for a call."""


class FixtureMissError(ContregenError):
    """Scripted adapter has no fixture for a (role, key); a hard test failure,
    deliberately outside BackendError so nothing downstream swallows it."""


class TemplateRenderError(ContregenError):
    def __init__(self, role: str, slot: str) -> None:
        super().__init__(f"unfilled slot {{{slot}}} rendering template for role {role}")
        self.role = role
        self.slot = slot


class TreeBuildError(BackendError):
    """Exploration aborted; carries the partial tree for diagnosis."""

    def __init__(self, message: str, partial_root=None) -> None:
        super().__init__(message)
        self.partial_root = partial_root
