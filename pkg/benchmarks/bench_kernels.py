"""Timing comparison of the compiled kernels against the pure-Python fallback.

Run directly:  python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import random
import time
from array import array

from contregen._kernels import BACKEND, fallback

try:
    from contregen._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_bm25(docs: int, terms: int, postings_per_term: int, seed: int = 7):
    rng = random.Random(seed)
    doc_lens = array("i", [rng.randint(20, 400) for _ in range(docs)])
    avgdl = sum(doc_lens) / docs
    postings = []
    for _ in range(terms):
        chosen = sorted(rng.sample(range(docs), postings_per_term))
        postings.append((
            array("i", chosen),
            array("i", [rng.randint(1, 8) for _ in chosen]),
            rng.uniform(0.2, 6.0),
        ))

    def run(accumulate):
        scores = array("d", [0.0]) * docs
        for doc_idx, tfs, idf in postings:
            accumulate(scores, doc_idx, tfs, doc_lens, idf, 1.2, 0.75, avgdl)
        return scores

    results = {"pure": _time(lambda: run(fallback.bm25_accumulate))}
    if _core is not None:
        results["compiled"] = _time(lambda: run(_core.bm25_accumulate))
        same = list(run(_core.bm25_accumulate)) == list(run(fallback.bm25_accumulate))
        results["bit_exact"] = same
    return results


def bench_lcs(length: int, vocab: int, seed: int = 11):
    rng = random.Random(seed)
    left = array("i", [rng.randrange(vocab) for _ in range(length)])
    right = array("i", [rng.randrange(vocab) for _ in range(length)])
    results = {"pure": _time(lambda: fallback.lcs_length(left, right))}
    if _core is not None:
        results["compiled"] = _time(lambda: _core.lcs_length(left, right))
        results["bit_exact"] = (_core.lcs_length(left, right)
                                == fallback.lcs_length(left, right))
    return results


def main() -> None:
    print(f"active kernel backend: {BACKEND}")
    print()
    bm25 = bench_bm25(docs=50_000, terms=40, postings_per_term=5_000)
    print("bm25_accumulate (50k docs, 40 terms x 5k postings):")
    _report(bm25)
    lcs = bench_lcs(length=2_000, vocab=200)
    print("lcs_length (2000 x 2000 tokens):")
    _report(lcs)


def _report(results: dict) -> None:
    pure = results["pure"]
    print(f"  pure:     {pure * 1e3:9.2f} ms")
    if "compiled" in results:
        compiled = results["compiled"]
        print(f"  compiled: {compiled * 1e3:9.2f} ms  "
              f"(speedup {pure / compiled:5.1f}x, "
              f"bit-exact={results['bit_exact']})")
    else:
        print("  compiled: not available")
    print()


if __name__ == "__main__":
    main()
