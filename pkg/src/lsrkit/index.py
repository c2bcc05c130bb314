"""Inverted index over document sparse vectors, with exact top-k retrieval.

Posting lists are stored in one flat CSR-style buffer (uint32 ordinal,
float64 impact) with per-term offsets. Scoring is exact: every overlapping
document receives its full dot product; documents with no term in common
with the query never appear. Selection keeps a bounded min-heap of size k,
ordered by (score descending, external doc id ascending).

The scoring kernel is compiled (Cython) when available and falls back to a
numpy implementation with bit-identical results; set LSRKIT_PURE_PYTHON=1
to force the fallback.
"""

from __future__ import annotations

import heapq
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse

from .core import SparseVector
from .errors import ContractError, DataError, ParseError

if os.environ.get("LSRKIT_PURE_PYTHON"):
    from . import _kernels_py as _kernels

    COMPILED_KERNELS = False
else:
    try:
        from . import _kernels  # type: ignore[no-redef]

        COMPILED_KERNELS = True
    except ImportError:
        from . import _kernels_py as _kernels  # type: ignore[no-redef]

        COMPILED_KERNELS = False

_POSTING_DTYPE = np.dtype([("ordinal", "<u4"), ("impact", "<f8")])

MANIFEST_FILE = "manifest.json"
DOC_TABLE_FILE = "doc_table.tsv"
POSTINGS_FILE = "postings.bin"


@dataclass(frozen=True)
class Posting:
    doc_ordinal: int
    impact: float


@dataclass(frozen=True)
class RankedList:
    """Top-k hits for one query: (doc_id, score), best first."""

    query_id: str
    hits: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hits", tuple((d, float(s)) for d, s in self.hits))
        scores = [s for _, s in self.hits]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ContractError(f"ranked list for query {self.query_id!r} has increasing scores")
        ids = [d for d, _ in self.hits]
        if len(set(ids)) != len(ids):
            raise ContractError(f"ranked list for query {self.query_id!r} has duplicate doc ids")

    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.hits]

    def __len__(self) -> int:
        return len(self.hits)


class InvertedIndex:
    """Immutable term -> postings map plus the ordinal -> doc id table."""

    def __init__(self, flat_ordinals, flat_impacts, term_offsets, doc_table, vocab_size):
        self._ordinals = np.ascontiguousarray(flat_ordinals, dtype=np.uint32)
        self._impacts = np.ascontiguousarray(flat_impacts, dtype=np.float64)
        self._offsets = np.ascontiguousarray(term_offsets, dtype=np.int64)
        self.doc_table: list[str] = list(doc_table)
        self.vocab_size = int(vocab_size)
        if self._offsets.shape != (self.vocab_size + 1,):
            raise ContractError("term_offsets must have vocab_size + 1 entries")
        for arr in (self._ordinals, self._impacts, self._offsets):
            arr.setflags(write=False)

    @property
    def doc_count(self) -> int:
        return len(self.doc_table)

    @property
    def total_postings(self) -> int:
        return int(self._ordinals.size)

    def posting_length(self, term_id: int) -> int:
        return int(self._offsets[term_id + 1] - self._offsets[term_id])

    def postings(self, term_id: int) -> list[Posting]:
        s, e = self._offsets[term_id], self._offsets[term_id + 1]
        return [Posting(int(o), float(w)) for o, w in zip(self._ordinals[s:e], self._impacts[s:e])]

    def document_vectors(self) -> list[tuple[str, SparseVector]]:
        """Reconstruct every indexed vector (the index is lossless)."""
        per_doc: list[list[tuple[int, float]]] = [[] for _ in range(self.doc_count)]
        for t in range(self.vocab_size):
            s, e = self._offsets[t], self._offsets[t + 1]
            for o, w in zip(self._ordinals[s:e], self._impacts[s:e]):
                per_doc[int(o)].append((t, float(w)))
        return [
            (doc_id, SparseVector.from_pairs(pairs))
            for doc_id, pairs in zip(self.doc_table, per_doc)
        ]

    # -- persistence --------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as f:
            json.dump({"doc_count": self.doc_count, "vocab_size": self.vocab_size}, f)
            f.write("\n")
        with open(directory / DOC_TABLE_FILE, "w", encoding="utf-8") as f:
            for ordinal, doc_id in enumerate(self.doc_table):
                if "\t" in doc_id or "\n" in doc_id:
                    raise DataError(f"doc id {doc_id!r} cannot contain tab or newline")
                f.write(f"{ordinal}\t{doc_id}\n")
        with open(directory / POSTINGS_FILE, "wb") as f:
            for t in range(self.vocab_size):
                s, e = self._offsets[t], self._offsets[t + 1]
                f.write(struct.pack("<I", int(e - s)))
                block = np.empty(int(e - s), dtype=_POSTING_DTYPE)
                block["ordinal"] = self._ordinals[s:e]
                block["impact"] = self._impacts[s:e]
                f.write(block.tobytes())

    @classmethod
    def load(cls, directory) -> "InvertedIndex":
        directory = Path(directory)
        try:
            with open(directory / MANIFEST_FILE, encoding="utf-8") as f:
                manifest = json.load(f)
            doc_count = int(manifest["doc_count"])
            vocab_size = int(manifest["vocab_size"])
        except (OSError, ValueError, KeyError) as exc:
            raise ParseError(f"bad index manifest: {exc}", path=str(directory / MANIFEST_FILE)) from exc

        doc_table: list[str] = []
        with open(directory / DOC_TABLE_FILE, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                row = line.rstrip("\n").split("\t")
                if len(row) != 2 or int(row[0]) != lineno - 1:
                    raise ParseError("bad doc-table row", path=str(directory / DOC_TABLE_FILE), line=lineno)
                doc_table.append(row[1])
        if len(doc_table) != doc_count:
            raise DataError(f"doc table has {len(doc_table)} rows, manifest says {doc_count}")

        data = (directory / POSTINGS_FILE).read_bytes()
        offsets = np.zeros(vocab_size + 1, dtype=np.int64)
        chunks = []
        pos = 0
        for t in range(vocab_size):
            if pos + 4 > len(data):
                raise ParseError(f"postings file truncated at term {t}", path=str(directory / POSTINGS_FILE))
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            nbytes = count * _POSTING_DTYPE.itemsize
            if pos + nbytes > len(data):
                raise ParseError(f"postings file truncated in term {t}", path=str(directory / POSTINGS_FILE))
            chunks.append(np.frombuffer(data, dtype=_POSTING_DTYPE, count=count, offset=pos))
            pos += nbytes
            offsets[t + 1] = offsets[t] + count
        if pos != len(data):
            raise ParseError("trailing bytes after last posting list", path=str(directory / POSTINGS_FILE))
        merged = np.concatenate(chunks) if chunks else np.empty(0, dtype=_POSTING_DTYPE)
        index = cls(merged["ordinal"], merged["impact"], offsets, doc_table, vocab_size)
        if index.total_postings and index._ordinals.max() >= doc_count:
            raise DataError("posting ordinal out of range for doc table")
        return index


def build_index(docs: list[tuple[str, SparseVector]], vocab_size: int) -> InvertedIndex:
    """Index the nonzero entries of every vector; ordinals follow input order."""
    seen: set[str] = set()
    for doc_id, _ in docs:
        if doc_id in seen:
            raise DataError(f"duplicate doc id {doc_id!r}")
        seen.add(doc_id)
    if len(docs) >= 2**32 - 1:
        raise ContractError("too many documents for uint32 ordinals")

    counts = np.zeros(vocab_size, dtype=np.int64)
    for _, vec in docs:
        vec.check_vocab(vocab_size)
        counts[vec.ids] += 1
    offsets = np.zeros(vocab_size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    total = int(offsets[-1])
    flat_ords = np.empty(total, dtype=np.uint32)
    flat_imps = np.empty(total, dtype=np.float64)
    fill = offsets[:-1].copy()
    for ordinal, (_, vec) in enumerate(docs):
        pos = fill[vec.ids]
        flat_ords[pos] = ordinal
        flat_imps[pos] = vec.weights
        fill[vec.ids] += 1

    return InvertedIndex(flat_ords, flat_imps, offsets, [d for d, _ in docs], vocab_size)


def _select_top_k(ordinals, scores, doc_table, k) -> list[tuple[str, float]]:
    """Exact top-k by (score desc, doc id asc).

    Vectorized selection: candidates strictly above the k-th score are in;
    ties at the boundary are resolved by ascending doc id with a bounded
    min-heap over just the tie pool.
    """
    n = len(ordinals)
    if n == 0:
        return []
    if k < n:
        kth = np.partition(scores, n - k)[n - k]  # k-th largest score
        sure = np.flatnonzero(scores > kth)
        pool = np.flatnonzero(scores == kth)
        fill = heapq.nsmallest(
            k - sure.size, ((doc_table[ordinals[i]], i) for i in pool)
        )
        chosen = np.concatenate([sure, np.array([i for _, i in fill], dtype=np.int64)])
    else:
        chosen = np.arange(n)
    ranked = sorted(
        ((doc_table[ordinals[i]], float(scores[i])) for i in chosen),
        key=lambda hit: (-hit[1], hit[0]),
    )
    return ranked


def search(index: InvertedIndex, query_vec: SparseVector, k: int, query_id: str = "") -> RankedList:
    """Exact top-k by sparse dot product over the inverted index."""
    if k < 1:
        raise ContractError("k must be >= 1")
    if query_vec.nnz == 0 or index.doc_count == 0:
        return RankedList(query_id)
    query_vec.check_vocab(index.vocab_size)

    starts = index._offsets[query_vec.ids]
    ends = index._offsets[query_vec.ids + 1]
    live = starts < ends
    if not live.any():
        return RankedList(query_id)
    cand, cand_scores = _kernels.daat_scores(
        index._ordinals,
        index._impacts,
        np.ascontiguousarray(starts[live]),
        np.ascontiguousarray(ends[live]),
        np.ascontiguousarray(query_vec.weights[live]),
        index.doc_count,
    )
    return RankedList(query_id, _select_top_k(cand, cand_scores, index.doc_table, k))


def brute_force_search(
    docs: list[tuple[str, SparseVector]], query_vec: SparseVector, k: int, query_id: str = ""
) -> RankedList:
    """Verification oracle: score every document directly, same ordering rules.

    Rides scipy's CSR matvec rather than the index machinery, so the two
    paths share no scoring code.
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    if not docs or query_vec.nnz == 0:
        return RankedList(query_id)

    width = int(query_vec.ids[-1]) + 1
    for _, vec in docs:
        if vec.nnz:
            width = max(width, int(vec.ids[-1]) + 1)
    indptr = np.zeros(len(docs) + 1, dtype=np.int64)
    for row, (_, vec) in enumerate(docs):
        indptr[row + 1] = indptr[row] + vec.nnz
    indices = np.concatenate([vec.ids for _, vec in docs]) if indptr[-1] else np.empty(0, np.int64)
    data = np.concatenate([vec.weights for _, vec in docs]) if indptr[-1] else np.empty(0, np.float64)
    matrix = scipy.sparse.csr_matrix((data, indices, indptr), shape=(len(docs), width))

    dense_q = query_vec.to_dense(width)
    scores = matrix.dot(dense_q)
    # Structural overlap test, independent of score magnitudes.
    overlap = matrix.dot((dense_q > 0).astype(np.float64)) > 0

    ranked = sorted(
        ((docs[i][0], float(scores[i])) for i in np.flatnonzero(overlap)),
        key=lambda hit: (-hit[1], hit[0]),
    )
    return RankedList(query_id, ranked[:k])


def index_stats(index: InvertedIndex, query_vec: SparseVector | None = None) -> dict:
    """Posting-list statistics; the per-query view sizes retrieval cost."""
    lengths = np.diff(index._offsets)
    used = lengths[lengths > 0]
    stats = {
        "doc_count": index.doc_count,
        "vocab_size": index.vocab_size,
        "terms_used": int(used.size),
        "total_postings": index.total_postings,
        "mean_posting_length": float(used.mean()) if used.size else 0.0,
        "max_posting_length": int(used.max()) if used.size else 0,
    }
    if query_vec is not None:
        per_term = {int(t): index.posting_length(int(t)) for t in query_vec.ids}
        stats["postings_per_query_term"] = per_term
        stats["query_total_postings"] = int(sum(per_term.values()))
    return stats
