"""Pure-Python kernels, used when the compiled extension is unavailable.

Same signatures and the same IEEE-double operation order as
``_core.pyx``; the two backends must return bit-identical results.
"""

from __future__ import annotations

from array import array


def bm25_accumulate(scores: array, doc_indices: array, tfs: array,
                    doc_lens: array, idf: float, k1: float, b: float,
                    avgdl: float) -> None:
    """Add one query term's BM25 contribution to every posting's document."""
    for i in range(len(doc_indices)):
        d = doc_indices[i]
        tf = tfs[i]
        num = tf * (k1 + 1.0)
        denom = tf + k1 * (1.0 - b + b * (doc_lens[d] / avgdl))
        scores[d] += idf * (num / denom)


def lcs_length(left: array, right: array) -> int:
    """Length of the longest common subsequence of two int-coded sequences."""
    m = len(left)
    n = len(right)
    if m == 0 or n == 0:
        return 0
    prev = [0] * (n + 1)
    curr = [0] * (n + 1)
    for i in range(1, m + 1):
        curr[0] = 0
        li = left[i - 1]
        for j in range(1, n + 1):
            if li == right[j - 1]:
                curr[j] = prev[j - 1] + 1
            elif prev[j] >= curr[j - 1]:
                curr[j] = prev[j]
            else:
                curr[j] = curr[j - 1]
        prev, curr = curr, prev
    return prev[n]
