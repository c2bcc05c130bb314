"""Sparsity diagnostics: dimension co-activation and top-term dumps.

High co-activation (many documents lighting up the same output dimensions)
forms a sub-dense region of the vocabulary space and directly lengthens
posting lists, so we quantify it: *density* is the mean, over active terms,
of document frequency df_i / N. Density 1.0 means every active term is
active in every document; 1/N means no term is shared at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import SparseVector, Vocabulary
from .errors import ContractError


@dataclass
class CoActivationReport:
    vocab_size: int
    doc_count: int
    document_frequency: dict[int, int] = field(default_factory=dict)  # active terms only
    active_terms: int = 0
    active_dims_per_doc_mean: float = 0.0
    active_dims_per_doc_min: int = 0
    active_dims_per_doc_max: int = 0
    density: float = 0.0
    expected_postings_per_active_term: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "doc_count": self.doc_count,
            "active_terms": self.active_terms,
            "active_dims_per_doc": {
                "mean": self.active_dims_per_doc_mean,
                "min": self.active_dims_per_doc_min,
                "max": self.active_dims_per_doc_max,
            },
            "density": self.density,
            "expected_postings_per_active_term": self.expected_postings_per_active_term,
            "document_frequency": {str(t): df for t, df in sorted(self.document_frequency.items())},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def coactivation_report(vectors: list[SparseVector], vocab_size: int) -> CoActivationReport:
    """Exact counting statistics over a collection of encoded vectors."""
    df = np.zeros(vocab_size, dtype=np.int64)
    nnz = []
    for vec in vectors:
        vec.check_vocab(vocab_size)
        df[vec.ids] += 1
        nnz.append(vec.nnz)
    report = CoActivationReport(vocab_size=vocab_size, doc_count=len(vectors))
    if not vectors:
        return report
    active = np.flatnonzero(df)
    report.document_frequency = {int(t): int(df[t]) for t in active}
    report.active_terms = int(active.size)
    report.active_dims_per_doc_mean = float(np.mean(nnz))
    report.active_dims_per_doc_min = int(np.min(nnz))
    report.active_dims_per_doc_max = int(np.max(nnz))
    if active.size:
        report.density = float(np.mean(df[active] / len(vectors)))
        report.expected_postings_per_active_term = float(df[active].sum() / active.size)
    return report


def top_terms(vec: SparseVector, vocab: Vocabulary, k: int) -> list[tuple[str, float]]:
    """Heaviest terms first; ties go to the smaller term id."""
    if k < 1:
        raise ContractError("k must be >= 1")
    if vec.nnz == 0:
        return []
    order = np.lexsort((vec.ids, -vec.weights))[:k]
    return [(vocab.term(int(vec.ids[i])), float(vec.weights[i])) for i in order]


def write_top_terms_tsv(path, items: list[tuple[str, SparseVector]], vocab: Vocabulary, k: int) -> None:
    """Dump per-item top terms as TSV rows (item_id, rank, term, weight)."""
    with open(path, "w", encoding="utf-8") as f:
        for item_id, vec in items:
            for rank, (term, weight) in enumerate(top_terms(vec, vocab, k), start=1):
                f.write(f"{item_id}\t{rank}\t{term}\t{weight!r}\n")


def stopword_mass(vec: SparseVector, vocab: Vocabulary, stoplist: set[str]) -> float:
    """Fraction of total weight spent on stoplisted terms (0.0 when empty)."""
    if vec.nnz == 0:
        return 0.0
    total = float(vec.weights.sum())
    stopped = sum(
        float(w) for t, w in zip(vec.ids, vec.weights) if vocab.term(int(t)) in stoplist
    )
    return stopped / total


def load_stoplist(path) -> set[str]:
    with open(path, encoding="utf-8") as f:
        return {line.strip() for line in f if line.strip()}
