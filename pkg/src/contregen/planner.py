"""Sub-question planning: prompt the model, parse its list, clean it up."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from contregen.llm import LlmGateway, PromptRole

logger = logging.getLogger(__name__)

# "1. text", "2) text", "- text", "* text"
_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]|[-*])\s+(.*\S)\s*$")

PASSAGE_CHAR_BUDGET = 4000


def render_passages(texts: Sequence[str], char_budget: int = PASSAGE_CHAR_BUDGET) -> str:
    """Numbered passage block for prompts, cut off at a character budget.

    Whole passages are dropped once the budget is reached (never split),
    except that a first passage too large on its own is hard-truncated so
    the prompt always carries some evidence.
    """
    lines: list[str] = []
    used = 0
    omitted = 0
    for position, text in enumerate(texts, start=1):
        line = f"[{position}] {text}"
        if not lines and len(line) > char_budget:
            lines.append(line[:char_budget] + " [passage truncated]")
            omitted = len(texts) - position
            break
        if used + len(line) + 1 > char_budget:
            omitted = len(texts) - position + 1
            break
        lines.append(line)
        used += len(line) + 1
    if omitted:
        lines.append(f"[{omitted} more passages omitted]")
    return "\n".join(lines)


def parse_numbered_list(text: str) -> list[str]:
    """Extract items from a numbered or bulleted list; other lines are ignored."""
    items = []
    for line in text.splitlines():
        match = _ITEM_RE.match(line)
        if match:
            items.append(match.group(1))
    return items


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class Plan:
    query: str
    subquestions: tuple[str, ...]


def propose_plan(gateway: LlmGateway, query: str, main_query: str,
                 passages_block: str, max_plan_size: int,
                 node_path: str = "") -> Plan:
    """One planning call; the parsed list is deduplicated, stripped of items
    that merely restate the query being expanded, and truncated.

    An unparseable response yields an empty plan (the node becomes a leaf)
    rather than an error.
    """
    response = gateway.complete(
        PromptRole.PLAN,
        {"query": query, "main_query": main_query, "passages": passages_block},
        node_path=node_path,
    )
    raw_items = parse_numbered_list(response)
    if not raw_items and response.strip():
        logger.warning("plan response for %r had no list items", query)
    seen: set[str] = set()
    kept: list[str] = []
    banned = {_normalize(query), _normalize(main_query)}
    for item in raw_items:
        norm = _normalize(item)
        if not norm or norm in seen or norm in banned:
            continue
        seen.add(norm)
        kept.append(item)
        if len(kept) == max_plan_size:
            break
    return Plan(query=query, subquestions=tuple(kept))


__all__ = [
    "PASSAGE_CHAR_BUDGET",
    "Plan",
    "parse_numbered_list",
    "propose_plan",
    "render_passages",
]
