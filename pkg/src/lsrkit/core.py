"""Vocabulary, sparse term vectors, and the tokenizer shared by every stage.

Conventions fixed here and relied on everywhere else:

* term ids are dense 0-based indices into the vocabulary file (one term per
  line, line number = id);
* sparse vectors store strictly increasing term ids with strictly positive
  float64 weights -- zeros are never stored, so sparsity equals entry count;
* everything is immutable after construction and safe to share across
  threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError, DataError, ParseError

# Lowercased runs of word characters (underscore excluded): splits on
# whitespace and punctuation, keeps digits.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class Vocabulary:
    """Bijection between term strings and dense 0-based term ids."""

    def __init__(self, terms: Sequence[str]):
        self.terms: list[str] = list(terms)
        self._ids: dict[str, int] = {}
        for i, term in enumerate(self.terms):
            if term in self._ids:
                raise DataError(f"duplicate vocabulary term {term!r} (ids {self._ids[term]} and {i})")
            self._ids[term] = i

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def size(self) -> int:
        return len(self.terms)

    def lookup(self, term: str) -> int | None:
        return self._ids.get(term)

    def term(self, term_id: int) -> str:
        return self.terms[term_id]

    def __contains__(self, term: str) -> bool:
        return term in self._ids

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            terms = [line.rstrip("\n") for line in f]
        # Trailing blank line from a final newline is not a term.
        if terms and terms[-1] == "":
            terms.pop()
        return cls(terms)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for term in self.terms:
                f.write(term + "\n")


@dataclass(frozen=True)
class TokenSequence:
    """Vocabulary term ids in input order."""

    token_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.token_ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.token_ids)


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Lowercase, split on whitespace/punctuation, keep in-vocabulary tokens.

    Deterministic by construction; out-of-vocabulary tokens are dropped
    silently, so the vocabulary file fully controls the term universe.
    """
    ids = []
    for surface in _TOKEN_RE.findall(text.lower()):
        tid = vocab.lookup(surface)
        if tid is not None:
            ids.append(tid)
    return TokenSequence(tuple(ids))


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SparseVector:
    """Sorted (term_id, weight) pairs with strictly positive float64 weights."""

    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    weights: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if ids.shape != weights.shape or ids.ndim != 1:
            raise ContractError("ids and weights must be parallel 1-d arrays")
        if ids.size:
            if np.any(np.diff(ids) <= 0):
                raise ContractError("term ids must be strictly increasing")
            if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
                raise ContractError("weights must be finite and > 0")
            if ids[0] < 0:
                raise ContractError("term ids must be nonnegative")
        object.__setattr__(self, "ids", _as_readonly(ids))
        object.__setattr__(self, "weights", _as_readonly(weights))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        pairs = list(pairs)
        if not pairs:
            return cls()
        ids, weights = zip(*pairs)
        return cls(np.asarray(ids, dtype=np.int64), np.asarray(weights, dtype=np.float64))

    @classmethod
    def from_dense(cls, values: np.ndarray) -> "SparseVector":
        """Keep strictly positive entries of a dense activation vector."""
        values = np.asarray(values, dtype=np.float64)
        ids = np.flatnonzero(values > 0.0)
        return cls(ids.astype(np.int64), values[ids])

    @property
    def nnz(self) -> int:
        return int(self.ids.size)

    def __len__(self) -> int:
        return self.nnz

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(w)) for i, w in zip(self.ids, self.weights)]

    def to_dense(self, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=np.float64)
        out[self.ids] = self.weights
        return out

    def check_vocab(self, vocab_size: int) -> "SparseVector":
        if self.nnz and int(self.ids[-1]) >= vocab_size:
            raise ContractError(
                f"term id {int(self.ids[-1])} out of range for vocabulary of size {vocab_size}"
            )
        return self

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.weights, other.weights)


def dot(a: SparseVector, b: SparseVector) -> float:
    """Sparse dot product over shared term ids (two-pointer merge).

    Contributions accumulate in ascending term-id order; the index and the
    brute-force oracle follow the same order, so all three agree bit for bit.
    """
    total = 0.0
    ia = ib = 0
    a_ids, a_w = a.ids, a.weights
    b_ids, b_w = b.ids, b.weights
    na, nb = a_ids.size, b_ids.size
    while ia < na and ib < nb:
        ta, tb = a_ids[ia], b_ids[ib]
        if ta == tb:
            total += a_w[ia] * b_w[ib]
            ia += 1
            ib += 1
        elif ta < tb:
            ia += 1
        else:
            ib += 1
    return total


def merge_sum(a: SparseVector, b: SparseVector) -> SparseVector:
    """Elementwise sum; preserves the sorted/positive/no-duplicate invariants."""
    if not a.nnz:
        return b
    if not b.nnz:
        return a
    ids = np.union1d(a.ids, b.ids)
    out = np.zeros(ids.size, dtype=np.float64)
    out[np.searchsorted(ids, a.ids)] += a.weights
    out[np.searchsorted(ids, b.ids)] += b.weights
    return SparseVector(ids, out)


def merge_max(a: SparseVector, b: SparseVector) -> SparseVector:
    """Elementwise maximum over the union of supports."""
    if not a.nnz:
        return b
    if not b.nnz:
        return a
    ids = np.union1d(a.ids, b.ids)
    out = np.zeros(ids.size, dtype=np.float64)
    pos_a = np.searchsorted(ids, a.ids)
    pos_b = np.searchsorted(ids, b.ids)
    out[pos_a] = a.weights
    np.maximum.at(out, pos_b, b.weights)
    return SparseVector(ids, out)


# ---------------------------------------------------------------------------
# JSONL serialization: {"id": "...", "vector": [[term_id, weight], ...]}
# Weights are emitted with repr-level precision, so round-trips are bit-exact.
# ---------------------------------------------------------------------------

def vector_record(item_id: str, vec: SparseVector) -> str:
    return json.dumps({"id": item_id, "vector": [[int(i), float(w)] for i, w in zip(vec.ids, vec.weights)]})


def parse_vector_record(line: str, path=None, lineno=None) -> tuple[str, SparseVector]:
    try:
        obj = json.loads(line)
        item_id = obj["id"]
        pairs = obj["vector"]
        vec = SparseVector.from_pairs((int(t), float(w)) for t, w in pairs)
    except (KeyError, TypeError, ValueError, ContractError) as exc:
        raise ParseError(f"bad sparse-vector record: {exc}", path=path, line=lineno) from exc
    return item_id, vec


def write_vectors(path, items: Iterable[tuple[str, SparseVector]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for item_id, vec in items:
            f.write(vector_record(item_id, vec) + "\n")


def read_vectors(path) -> list[tuple[str, SparseVector]]:
    out = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            item_id, vec = parse_vector_record(line, path=path, lineno=lineno)
            if item_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate vector id {item_id!r}")
            seen.add(item_id)
            out.append((item_id, vec))
    return out
