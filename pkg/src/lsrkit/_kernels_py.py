"""Pure-numpy fallback for the compiled scoring kernels.

Accumulates term-at-a-time into a dense score array. Because every query
term's contributions land in ascending term order per document (the posting
ranges are visited in ascending term id), the resulting scores are
bit-identical to the compiled document-at-a-time merge.
"""

from __future__ import annotations

import numpy as np


def daat_scores(flat_ordinals, flat_impacts, starts, ends, query_weights, doc_count):
    scores = np.zeros(doc_count, dtype=np.float64)
    touched = np.zeros(doc_count, dtype=bool)
    for s, e, qw in zip(starts, ends, query_weights):
        ords = flat_ordinals[s:e]
        scores[ords] += qw * flat_impacts[s:e]
        touched[ords] = True
    cand = np.flatnonzero(touched)
    return cand.astype(np.uint32), scores[cand]


def sparse_dot(ids_a, wa, ids_b, wb):
    total = 0.0
    ia = ib = 0
    na, nb = len(ids_a), len(ids_b)
    while ia < na and ib < nb:
        ta, tb = ids_a[ia], ids_b[ib]
        if ta == tb:
            total += wa[ia] * wb[ib]
            ia += 1
            ib += 1
        elif ta < tb:
            ia += 1
        else:
            ib += 1
    return total
