"""Two-step vetting of planned sub-questions.

Step one asks whether the sub-question is needed at all and, only if so,
rewrites it into a standalone retrieval query. Step two probes retrieval
with the rewritten form and asks whether the hits actually bear on it; an
empty probe fails immediately without spending a generation call. Yes/no
parsing is fail-closed: anything that is not a clear yes counts as no.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from contregen.llm import LlmGateway, PromptRole
from contregen.planner import render_passages
from contregen.retrieval import RetrieverHandle

logger = logging.getLogger(__name__)


def parse_yes_no(text: str) -> Optional[bool]:
    """Read the verdict from the first nonempty line; None when unclear."""
    for line in text.splitlines():
        stripped = line.strip().lower()
        if not stripped:
            continue
        word = stripped.split()[0].rstrip(".,:;!")
        if word == "yes":
            return True
        if word == "no":
            return False
        return None
    return None


@dataclass(frozen=True)
class VerificationOutcome:
    subquestion: str
    rewritten: str
    necessary: bool
    relevant: bool
    # Hits from the relevance probe; an accepted sub-question's node reuses
    # them so the same retrieval is not issued twice.
    probe_hits: tuple[tuple[str, float], ...]

    @property
    def accepted(self) -> bool:
        return self.necessary and self.relevant


def check_necessity_and_rewrite(gateway: LlmGateway, subquestion: str,
                                main_query: str, node_path: str = "") -> tuple[bool, str]:
    response = gateway.complete(
        PromptRole.NECESSITY,
        {"subquestion": subquestion, "main_query": main_query},
        node_path=node_path,
    )
    verdict = parse_yes_no(response)
    if verdict is None:
        logger.warning("unparseable necessity verdict for %r; treating as no",
                       subquestion)
    if not verdict:
        return False, subquestion
    rewritten = gateway.complete(
        PromptRole.REWRITE,
        {"subquestion": subquestion, "main_query": main_query},
        node_path=node_path,
    ).strip()
    if not rewritten:
        logger.warning("empty rewrite for %r; keeping the original form", subquestion)
        rewritten = subquestion
    return True, rewritten


def check_relevance(gateway: LlmGateway, retriever: RetrieverHandle,
                    rewritten: str, main_query: str, topk: int,
                    node_path: str = "") -> tuple[bool, tuple[tuple[str, float], ...]]:
    probe = retriever.retrieve(rewritten, topk)
    if not probe.hits:
        return False, ()
    passages_block = render_passages([retriever.text(pid) for pid in probe.hit_ids()])
    response = gateway.complete(
        PromptRole.RELEVANCE,
        {"subquestion": rewritten, "main_query": main_query,
         "passages": passages_block},
        node_path=node_path,
    )
    verdict = parse_yes_no(response)
    if verdict is None:
        logger.warning("unparseable relevance verdict for %r; treating as no",
                       rewritten)
    return bool(verdict), probe.hits


def verify(gateway: LlmGateway, retriever: RetrieverHandle, subquestion: str,
           main_query: str, topk: int, node_path: str = "") -> VerificationOutcome:
    necessary, rewritten = check_necessity_and_rewrite(
        gateway, subquestion, main_query, node_path=node_path)
    if not necessary:
        return VerificationOutcome(subquestion=subquestion, rewritten=subquestion,
                                   necessary=False, relevant=False, probe_hits=())
    relevant, hits = check_relevance(
        gateway, retriever, rewritten, main_query, topk, node_path=node_path)
    return VerificationOutcome(subquestion=subquestion, rewritten=rewritten,
                               necessary=True, relevant=relevant, probe_hits=hits)


__all__ = [
    "VerificationOutcome",
    "check_necessity_and_rewrite",
    "check_relevance",
    "parse_yes_no",
    "verify",
]
