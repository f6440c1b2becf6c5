"""Shared fixtures.

The planted-facet corpus is built so token overlap is fully controlled:
the root question shares vocabulary only with facet A, while facets B and C
are reachable only through the scripted sub-queries. Token-level disjointness
is asserted here at import of the fixture, not just assumed.
"""

from __future__ import annotations

import itertools
import json
import random

import pytest

from contregen.corpus import CorpusStore, Passage, QueryRecord
from contregen.retrieval import tokenize

ROOT_QUERY = "how to detect hidden cameras and microphones"

FACET_A = {
    "a1": "detect hidden cameras by inspecting smoke detectors and wall fixtures closely",
    "a2": "hidden microphones often hide inside power strips and phone chargers",
    "a3": "a careful visual inspection can detect hidden cameras in rental apartments",
}
FACET_B = {
    "b1": "radio frequency scanners sweep rooms seeking transmitter signals",
    "b2": "scanner devices locate wireless transmitter signals near furniture",
    "b3": "commercial scanners flag strong radio frequency spikes instantly",
}
FACET_C = {
    "c1": "flashlight beams reveal lens reflections across dark corners",
    "c2": "lens glint appears when light strikes camera optics",
    "c3": "slow flashlight passes expose reflective lens glints",
}
DISTRACTORS = {
    "d1": "garden soil benefits from regular composting routines",
    "d2": "morning stretches improve posture over several weeks",
}

SUB_B = "radio frequency scanner transmitter signals"
SUB_C = "flashlight lens reflections glint"
PLAN_B_ITEM = "What tools pick up hidden transmitters?"
PLAN_C_ITEM = "How can reflections expose concealed optics?"

GOLD_IDS = sorted(FACET_A) + sorted(FACET_B) + sorted(FACET_C)

# Facet isolation, checked once up front: the root query must score only
# facet A, and each sub-query only its own facet.
_root_tokens = set(tokenize(ROOT_QUERY))
_bc_tokens = set()
for _text in list(FACET_B.values()) + list(FACET_C.values()):
    _bc_tokens |= set(tokenize(_text))
assert not (_root_tokens & _bc_tokens), _root_tokens & _bc_tokens
for _text in DISTRACTORS.values():
    _dtoks = set(tokenize(_text))
    assert not (_dtoks & _root_tokens)
    assert not (_dtoks & set(tokenize(SUB_B)))
    assert not (_dtoks & set(tokenize(SUB_C)))
_b_tokens = set()
for _text in FACET_B.values():
    _b_tokens |= set(tokenize(_text))
assert not (set(tokenize(SUB_C)) & _b_tokens)
_c_tokens = set()
for _text in FACET_C.values():
    _c_tokens |= set(tokenize(_text))
assert not (set(tokenize(SUB_B)) & _c_tokens)

ITERRETGEN_RESPONSES = [
    "inspect smoke detectors and wall fixtures closely",
    "hidden microphones hide inside power strips and phone chargers",
    "check rental apartments with careful visual inspection",
    "smoke detectors and power strips deserve close inspection",
    "visual inspection helps detect hidden cameras",
]
for _resp in ITERRETGEN_RESPONSES:
    assert not (set(tokenize(_resp)) & _bc_tokens), _resp


def planted_corpus() -> CorpusStore:
    store = CorpusStore()
    for table in (FACET_A, FACET_B, FACET_C, DISTRACTORS):
        for pid in sorted(table):
            store.add(Passage(id=pid, text=table[pid], meta={}))
    return store


def planted_query() -> QueryRecord:
    facet_of = {}
    for pid in FACET_A:
        facet_of[pid] = "visual"
    for pid in FACET_B:
        facet_of[pid] = "scanner"
    for pid in FACET_C:
        facet_of[pid] = "flashlight"
    return QueryRecord(
        id="q-planted",
        query=ROOT_QUERY,
        gold_ids=frozenset(GOLD_IDS),
        reference="inspect fixtures closely use scanners and flashlight checks",
        facet_of=facet_of,
        short_answers=None,
    )


def contregen_fixtures() -> dict:
    return {
        "plan": {
            ROOT_QUERY: f"1. {PLAN_B_ITEM}\n2. {PLAN_C_ITEM}",
            SUB_B: "no further sub-questions",
            SUB_C: "no further sub-questions",
        },
        "necessity": {PLAN_B_ITEM: "yes", PLAN_C_ITEM: "yes"},
        "rewrite": {PLAN_B_ITEM: SUB_B, PLAN_C_ITEM: SUB_C},
        "relevance": {SUB_B: "yes", SUB_C: "yes"},
        "summarize_leaf": {
            SUB_B: "Scanners locate hidden transmitters by their radio signals.",
            SUB_C: "A flashlight reveals camera lenses through glinting reflections.",
        },
        "generate_root": {
            ROOT_QUERY: "Inspect fixtures closely, sweep with a scanner, "
                        "and check for lens reflections with a flashlight.",
        },
    }


def retgen_fixtures() -> dict:
    return {"baseline_generate": {ROOT_QUERY: "Inspect fixtures and chargers closely."}}


def iterretgen_fixtures() -> dict:
    return {"baseline_generate": {ROOT_QUERY: list(ITERRETGEN_RESPONSES)}}


def selfask_fixtures() -> dict:
    return {
        "baseline_followup": {
            ROOT_QUERY: [
                f"Follow up: {SUB_B}",
                f"Follow up: {SUB_C}",
                "no follow-up",
            ],
        },
        "baseline_generate": {
            ROOT_QUERY: "Inspect, scan, and shine a flashlight.",
        },
    }


@pytest.fixture
def planted(tmp_path):
    """File layout for CLI and run() tests over the planted-facet corpus."""
    corpus_path = tmp_path / "corpus.jsonl"
    with corpus_path.open("w", encoding="utf-8") as fh:
        for table in (FACET_A, FACET_B, FACET_C, DISTRACTORS):
            for pid in sorted(table):
                fh.write(json.dumps({"id": pid, "text": table[pid]}) + "\n")
    record = planted_query()
    queries_path = tmp_path / "queries.jsonl"
    with queries_path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "id": record.id,
            "query": record.query,
            "gold_ids": sorted(record.gold_ids),
            "reference": record.reference,
            "facet_of": record.facet_of,
        }) + "\n")
    return {"corpus": corpus_path, "queries": queries_path, "dir": tmp_path}


def write_fixture_file(tmp_path, fixtures: dict, name: str = "fixtures.json"):
    path = tmp_path / name
    path.write_text(json.dumps(fixtures), encoding="utf-8")
    return path


# --- fully-accepted two-branch, depth-2 fixture (call accounting) ---------

ACCT_ROOT = "shared root question"
ACCT_S1, ACCT_S2 = "shared branch one", "shared branch two"
ACCT_LEAVES = ["shared leaf one a", "shared leaf one b",
               "shared leaf two a", "shared leaf two b"]


def accounting_corpus() -> CorpusStore:
    store = CorpusStore()
    for index in range(3):
        store.add(Passage(id=f"p{index}", text=f"shared evidence passage {index}",
                          meta={}))
    return store


def accounting_fixtures() -> dict:
    plan = {
        ACCT_ROOT: "1. branch one item\n2. branch two item",
        ACCT_S1: "1. leaf one a item\n2. leaf one b item",
        ACCT_S2: "1. leaf two a item\n2. leaf two b item",
    }
    items = ["branch one item", "branch two item", "leaf one a item",
             "leaf one b item", "leaf two a item", "leaf two b item"]
    rewrites = dict(zip(items, [ACCT_S1, ACCT_S2] + ACCT_LEAVES))
    return {
        "plan": plan,
        "necessity": {item: "yes" for item in items},
        "rewrite": rewrites,
        "relevance": {target: "yes" for target in [ACCT_S1, ACCT_S2] + ACCT_LEAVES},
        "summarize_leaf": {leaf: f"summary of {leaf}" for leaf in ACCT_LEAVES},
        "merge_intermediate": {ACCT_S1: "merged branch one",
                               ACCT_S2: "merged branch two"},
        "generate_root": {ACCT_ROOT: "final synthesized answer"},
    }


# --- randomized tree blueprints (invariant fuzzing) -----------------------


def random_blueprint(rng: random.Random, max_depth: int, max_plan_size: int):
    """A random accept/reject tree plus the scripted fixtures realizing it.

    Every query contains the token "shared" so relevance probes always hit
    against the accounting corpus. Returns (root_query, expected, fixtures)
    where expected mirrors the accepted structure.
    """
    counter = itertools.count()
    fixtures: dict = {"plan": {}, "necessity": {}, "rewrite": {},
                      "relevance": {}, "summarize_leaf": {},
                      "merge_intermediate": {}, "generate_root": {}}

    def build(query: str, depth: int) -> dict:
        node = {"query": query, "children": []}
        if depth >= max_depth:
            return node
        plan_count = rng.randint(0, max_plan_size)
        if plan_count == 0:
            fixtures["plan"][query] = "nothing further"
            return node
        lines = []
        for position in range(plan_count):
            serial = next(counter)
            item = f"planned item {serial}"
            lines.append(f"{position + 1}. {item}")
            fate = rng.choice(["accept", "accept", "unnecessary", "irrelevant"])
            if fate == "unnecessary":
                fixtures["necessity"][item] = "no"
                continue
            fixtures["necessity"][item] = "yes"
            rewritten = f"shared rewritten {serial}"
            fixtures["rewrite"][item] = rewritten
            if fate == "irrelevant":
                fixtures["relevance"][rewritten] = "no"
                continue
            fixtures["relevance"][rewritten] = "yes"
            node["children"].append(build(rewritten, depth + 1))
        fixtures["plan"][query] = "\n".join(lines)
        return node

    root_query = f"shared root {next(counter)}"
    expected = build(root_query, 0)
    return root_query, expected, fixtures
