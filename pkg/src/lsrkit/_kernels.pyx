# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels.

``daat_scores`` walks the query's posting lists document-at-a-time: a k-way
merge over the ordinal-sorted lists emits each overlapping document exactly
once with its full dot-product score. Per document, contributions are added
in ascending term order, which keeps results bit-identical to the numpy
fallback and to the brute-force oracle (same summation order; the extension
is compiled with -ffp-contract=off so mul+add never fuses).

Posting lists live in one flat CSR-style buffer; each query term selects the
half-open range [starts[i], ends[i]).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef cnp.uint32_t SENTINEL = 0xFFFFFFFF


def daat_scores(const cnp.uint32_t[::1] flat_ordinals,
                const double[::1] flat_impacts,
                const cnp.int64_t[::1] starts,
                const cnp.int64_t[::1] ends,
                const double[::1] query_weights,
                Py_ssize_t doc_count):
    """Merge posting ranges into (ordinals, scores) for every touched document.

    Ranges are ordinal-sorted and given in ascending term-id order. Returns
    ascending-ordinal arrays covering exactly the touched documents.
    """
    cdef Py_ssize_t n_lists = starts.shape[0]
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t i
    for i in range(n_lists):
        total += ends[i] - starts[i]

    out_ords_arr = np.empty(total, dtype=np.uint32)
    out_scores_arr = np.empty(total, dtype=np.float64)
    cdef cnp.uint32_t[::1] out_ords = out_ords_arr
    cdef double[::1] out_scores = out_scores_arr

    cursor_arr = np.asarray(starts, dtype=np.int64).copy()
    cdef cnp.int64_t[::1] cursor = cursor_arr
    cdef cnp.uint32_t[::1] current = np.empty(max(n_lists, 1), dtype=np.uint32)

    for i in range(n_lists):
        current[i] = flat_ordinals[cursor[i]] if cursor[i] < ends[i] else SENTINEL

    cdef Py_ssize_t n_out = 0
    cdef cnp.uint32_t lowest
    cdef double score
    cdef cnp.int64_t c

    while True:
        lowest = SENTINEL
        for i in range(n_lists):
            if current[i] < lowest:
                lowest = current[i]
        if lowest == SENTINEL:
            break
        score = 0.0
        for i in range(n_lists):
            if current[i] == lowest:
                c = cursor[i]
                score += query_weights[i] * flat_impacts[c]
                c += 1
                cursor[i] = c
                current[i] = flat_ordinals[c] if c < ends[i] else SENTINEL
        out_ords[n_out] = lowest
        out_scores[n_out] = score
        n_out += 1

    return out_ords_arr[:n_out], out_scores_arr[:n_out]


def sparse_dot(const cnp.int64_t[::1] ids_a, const double[::1] wa,
               const cnp.int64_t[::1] ids_b, const double[::1] wb):
    """Two-pointer merge dot product over shared term ids."""
    cdef double total = 0.0
    cdef Py_ssize_t ia = 0, ib = 0
    cdef Py_ssize_t na = ids_a.shape[0], nb = ids_b.shape[0]
    while ia < na and ib < nb:
        if ids_a[ia] == ids_b[ib]:
            total += wa[ia] * wb[ib]
            ia += 1
            ib += 1
        elif ids_a[ia] < ids_b[ib]:
            ia += 1
        else:
            ib += 1
    return total
