#!/usr/bin/env python3
"""Benchmark the compiled scoring kernel against the numpy fallback.

Builds a synthetic index, runs the same query batch through both backends,
verifies the results are bit-identical, and reports per-query latency.
"""

import argparse
import time

import numpy as np

from lsrkit import _kernels_py
from lsrkit.index import _select_top_k, build_index
from lsrkit.synthetic import random_vectors

try:
    from lsrkit import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def run_backend(kernels, index, queries, k):
    started = time.perf_counter()
    checksum = 0.0
    hits = 0
    for _, query in queries:
        starts = index._offsets[query.ids]
        ends = index._offsets[query.ids + 1]
        live = starts < ends
        if not live.any():
            continue
        cand, scores = kernels.daat_scores(
            index._ordinals,
            index._impacts,
            np.ascontiguousarray(starts[live]),
            np.ascontiguousarray(ends[live]),
            np.ascontiguousarray(query.weights[live]),
            index.doc_count,
        )
        top = _select_top_k(cand, scores, index.doc_table, k)
        hits += len(top)
        checksum += sum(s for _, s in top)
    elapsed = time.perf_counter() - started
    return elapsed, hits, checksum


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=50_000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--vocab-size", type=int, default=2_000)
    parser.add_argument("--doc-nnz", type=int, default=64)
    parser.add_argument("--query-nnz", type=int, default=16)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(
        f"building index: {args.docs} docs, vocab {args.vocab_size}, "
        f"~{args.doc_nnz} terms/doc ..."
    )
    docs = random_vectors(
        args.docs, args.vocab_size, seed=args.seed, min_nnz=args.doc_nnz // 2, max_nnz=args.doc_nnz
    )
    queries = random_vectors(
        args.queries,
        args.vocab_size,
        seed=args.seed + 1,
        min_nnz=max(1, args.query_nnz // 2),
        max_nnz=args.query_nnz,
        id_prefix="q",
    )
    index = build_index(docs, args.vocab_size)
    print(f"total postings: {index.total_postings}")

    backends = [("numpy fallback", _kernels_py)]
    if _kernels_c is not None:
        backends.insert(0, ("compiled (cython)", _kernels_c))
    else:
        print("compiled kernel not available; benchmarking the fallback only")

    results = {}
    for name, kernels in backends:
        run_backend(kernels, index, queries[: min(10, len(queries))], args.k)  # warm-up
        elapsed, hits, checksum = run_backend(kernels, index, queries, args.k)
        results[name] = (elapsed, hits, checksum)
        print(
            f"{name:<18} {elapsed:8.3f}s total  {1e3 * elapsed / args.queries:8.3f} ms/query  "
            f"({hits} hits, checksum {checksum:.6f})"
        )

    if len(results) == 2:
        (fast, slow) = (results["compiled (cython)"], results["numpy fallback"])
        assert fast[1:] == slow[1:], "backends disagree!"
        print(f"backends agree bit-for-bit; speedup x{slow[0] / fast[0]:.2f}")


if __name__ == "__main__":
    main()
