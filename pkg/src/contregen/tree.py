"""Recursive query-tree exploration.

The root retrieves for the main question, plans sub-questions, and for each
one in plan order runs the two-step vetting; an accepted sub-question
becomes a child (reusing its relevance-probe hits as its retrieval) and is
explored depth-first before the next sibling is vetted. Nodes at max_depth
are leaves and are never planned, so generation calls follow a strict
pre-order schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from contregen.errors import BackendError, DataError, TreeBuildError
from contregen.llm import LlmGateway
from contregen.planner import propose_plan, render_passages
from contregen.retrieval import RetrieverHandle
from contregen.verifier import VerificationOutcome, verify


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 2
    max_plan_size: int = 5
    topk: int = 5
    dedup_passages: bool = True

    def __post_init__(self) -> None:
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_plan_size < 1:
            raise ValueError("max_plan_size must be >= 1")
        if self.topk < 1:
            raise ValueError("topk must be >= 1")


@dataclass
class QueryTreeNode:
    query: str            # standalone (rewritten) form used for retrieval
    original_query: str   # as the planner produced it
    depth: int
    path: str             # "0" at the root, then "0.1", "0.1.0", ...
    retrieved: tuple[tuple[str, float], ...] = ()
    children: list["QueryTreeNode"] = field(default_factory=list)
    summary: Optional[str] = None
    rejected: tuple[VerificationOutcome, ...] = ()

    def is_leaf(self) -> bool:
        return not self.children

    def walk(self):
        """Pre-order traversal."""
        yield self
        for child in self.children:
            yield from child.walk()


def build_tree(gateway: LlmGateway, retriever: RetrieverHandle, query: str,
               config: TreeConfig) -> QueryTreeNode:
    root = QueryTreeNode(query=query, original_query=query, depth=0, path="0")
    try:
        root.retrieved = retriever.retrieve(query, config.topk).hits
        _expand(gateway, retriever, root, query, config)
    except BackendError as exc:
        raise TreeBuildError(f"tree build aborted for {query!r}: {exc}",
                             partial_root=root) from exc
    return root


def _expand(gateway: LlmGateway, retriever: RetrieverHandle,
            node: QueryTreeNode, main_query: str, config: TreeConfig) -> None:
    if node.depth >= config.max_depth:
        return
    passages_block = render_passages(
        [retriever.text(pid) for pid, _ in node.retrieved])
    plan = propose_plan(gateway, node.query, main_query, passages_block,
                        config.max_plan_size, node_path=node.path)
    rejected: list[VerificationOutcome] = []
    for subquestion in plan.subquestions:
        outcome = verify(gateway, retriever, subquestion, main_query,
                         config.topk, node_path=node.path)
        if not outcome.accepted:
            rejected.append(outcome)
            continue
        child = QueryTreeNode(
            query=outcome.rewritten,
            original_query=subquestion,
            depth=node.depth + 1,
            path=f"{node.path}.{len(node.children)}",
            retrieved=outcome.probe_hits,
        )
        node.children.append(child)
        _expand(gateway, retriever, child, main_query, config)
    node.rejected = tuple(rejected)


def collect_passages(root: QueryTreeNode, dedup: bool = True) -> list[str]:
    """Passage ids over the whole tree in pre-order, first occurrence kept."""
    out: list[str] = []
    seen: set[str] = set()
    for node in root.walk():
        for pid, _ in node.retrieved:
            if dedup:
                if pid in seen:
                    continue
                seen.add(pid)
            out.append(pid)
    return out


def check_invariants(root: QueryTreeNode, config: TreeConfig) -> None:
    """Raise AssertionError when the structural guarantees do not hold."""
    assert root.depth == 0 and root.path == "0"
    for node in root.walk():
        assert node.depth <= config.max_depth
        assert len(node.children) <= config.max_plan_size
        assert len(node.retrieved) <= config.topk
        ids = [pid for pid, _ in node.retrieved]
        assert len(ids) == len(set(ids)), f"duplicate hits at {node.path}"
        scores = [score for _, score in node.retrieved]
        assert all(a >= b for a, b in zip(scores, scores[1:])), \
            f"scores out of order at {node.path}"
        if node.depth == config.max_depth:
            assert node.is_leaf()
        for index, child in enumerate(node.children):
            assert child.depth == node.depth + 1
            assert child.path == f"{node.path}.{index}"


def export_tree(root: QueryTreeNode) -> dict:
    """JSON-ready nested structure; import_tree round-trips it."""
    return {
        "query": root.query,
        "original_query": root.original_query,
        "depth": root.depth,
        "path": root.path,
        "retrieved": [[pid, score] for pid, score in root.retrieved],
        "summary": root.summary,
        "children": [export_tree(child) for child in root.children],
    }


def import_tree(data: dict) -> QueryTreeNode:
    try:
        node = QueryTreeNode(
            query=data["query"],
            original_query=data["original_query"],
            depth=int(data["depth"]),
            path=data["path"],
            retrieved=tuple((str(pid), float(score)) for pid, score in data["retrieved"]),
            summary=data.get("summary"),
        )
        node.children = [import_tree(child) for child in data.get("children", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed tree export: {exc}") from exc
    return node


def to_dot(root: QueryTreeNode, label: Callable[[QueryTreeNode], str] = None) -> str:
    """Graph description (DOT) of the tree for external rendering."""
    if label is None:
        label = lambda node: node.query if len(node.query) <= 40 else node.query[:37] + "..."
    lines = ["digraph querytree {", "  rankdir=TB;"]
    for node in root.walk():
        text = label(node).replace('"', r'\"')
        lines.append(f'  "{node.path}" [label="{text}"];')
        for child in node.children:
            lines.append(f'  "{node.path}" -> "{child.path}";')
    lines.append("}")
    return "\n".join(lines)


__all__ = [
    "QueryTreeNode",
    "TreeConfig",
    "build_tree",
    "check_invariants",
    "collect_passages",
    "export_tree",
    "import_tree",
    "to_dot",
]
