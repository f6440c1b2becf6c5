# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: BM25 posting-list accumulation and LCS length.

The arithmetic here must stay expression-for-expression identical to
``contregen._kernels.fallback`` -- rankings are verified bit-exactly against a
brute-force scorer, and the pure and compiled backends must be
interchangeable. Built with -ffp-contract=off; do not reorder the float
operations.
"""

from libc.stdlib cimport free, malloc


def bm25_accumulate(double[::1] scores, int[::1] doc_indices, int[::1] tfs,
                    int[::1] doc_lens, double idf, double k1, double b,
                    double avgdl):
    """Add one query term's BM25 contribution to every posting's document.

    scores is indexed by internal document index and accumulated in place.
    """
    cdef Py_ssize_t i, n = doc_indices.shape[0]
    cdef int d, tf
    cdef double num, denom
    for i in range(n):
        d = doc_indices[i]
        tf = tfs[i]
        num = tf * (k1 + 1.0)
        denom = tf + k1 * (1.0 - b + b * (doc_lens[d] / avgdl))
        scores[d] += idf * (num / denom)


def lcs_length(int[::1] left, int[::1] right):
    """Length of the longest common subsequence of two int-coded sequences."""
    cdef Py_ssize_t m = left.shape[0]
    cdef Py_ssize_t n = right.shape[0]
    if m == 0 or n == 0:
        return 0
    cdef int *prev = <int *> malloc((n + 1) * sizeof(int))
    cdef int *curr = <int *> malloc((n + 1) * sizeof(int))
    if prev == NULL or curr == NULL:
        free(prev)
        free(curr)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef int *tmp
    cdef int result
    try:
        for j in range(n + 1):
            prev[j] = 0
        for i in range(1, m + 1):
            curr[0] = 0
            for j in range(1, n + 1):
                if left[i - 1] == right[j - 1]:
                    curr[j] = prev[j - 1] + 1
                elif prev[j] >= curr[j - 1]:
                    curr[j] = prev[j]
                else:
                    curr[j] = curr[j - 1]
            tmp = prev
            prev = curr
            curr = tmp
        result = prev[n]
    finally:
        free(prev)
        free(curr)
    return result
