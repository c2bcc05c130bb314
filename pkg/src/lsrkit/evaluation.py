"""Rank-quality metrics (NDCG, MAP, Recall at cutoffs) and TREC-format files.

Definitions follow common TREC-eval semantics: linear gain and log2 discount
for NDCG, MAP normalized by the total number of relevant documents, binary
relevance for MAP/Recall (grade > 0). Queries without any relevant document
are excluded from means and reported separately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ContractError, DataError, ParseError
from .index import RankedList

NDCG_MAP_CUTOFFS = (5, 10, 100, 500, 1000)
RECALL_CUTOFFS = (20, 100, 500, 1000)


class Qrels:
    """Graded relevance judgments: (query_id, doc_id) -> integer grade >= 0."""

    def __init__(self, judgments: dict[str, dict[str, int]] | None = None):
        self._by_query: dict[str, dict[str, int]] = {}
        if judgments:
            for qid, docs in judgments.items():
                for did, grade in docs.items():
                    self.add(qid, did, grade)

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        grade = int(grade)
        if grade < 0:
            raise DataError(f"negative grade for ({query_id!r}, {doc_id!r})")
        docs = self._by_query.setdefault(query_id, {})
        if doc_id in docs:
            raise DataError(f"duplicate judgment for ({query_id!r}, {doc_id!r})")
        docs[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._by_query.get(query_id, {}).get(doc_id, 0)

    def query_ids(self) -> list[str]:
        return sorted(self._by_query)

    def has_query(self, query_id: str) -> bool:
        return query_id in self._by_query

    def judged(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def relevant_count(self, query_id: str) -> int:
        return sum(1 for g in self._by_query.get(query_id, {}).values() if g > 0)

    def __len__(self) -> int:
        return sum(len(d) for d in self._by_query.values())


def ndcg_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    """Linear-gain NDCG: DCG@k / ideal DCG@k. 0.0 when nothing is relevant."""
    if k < 1:
        raise ContractError("k must be >= 1")
    grades = sorted(qrels.judged(ranked.query_id).values(), reverse=True)
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(grades[:k]))
    if idcg == 0.0:
        return 0.0
    dcg = sum(
        qrels.grade(ranked.query_id, doc_id) / math.log2(i + 2)
        for i, (doc_id, _) in enumerate(ranked.hits[:k])
    )
    return dcg / idcg


def map_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    """Average precision at k over binary relevance, normalized by total R."""
    if k < 1:
        raise ContractError("k must be >= 1")
    total_relevant = qrels.relevant_count(ranked.query_id)
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for i, (doc_id, _) in enumerate(ranked.hits[:k]):
        if qrels.grade(ranked.query_id, doc_id) > 0:
            hits += 1
            precision_sum += hits / (i + 1)
    return precision_sum / total_relevant


def recall_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    if k < 1:
        raise ContractError("k must be >= 1")
    total_relevant = qrels.relevant_count(ranked.query_id)
    if total_relevant == 0:
        return 0.0
    found = sum(
        1 for doc_id, _ in ranked.hits[:k] if qrels.grade(ranked.query_id, doc_id) > 0
    )
    return found / total_relevant


@dataclass
class MetricReport:
    """Per-query and mean metric values, as fractions and x100 (percent)."""

    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    mean: dict[str, float] = field(default_factory=dict)
    evaluated_queries: int = 0
    skipped_queries: list[str] = field(default_factory=list)  # in run, absent from qrels
    zero_relevant_queries: list[str] = field(default_factory=list)

    @property
    def mean_percent(self) -> dict[str, float]:
        return {label: 100.0 * value for label, value in self.mean.items()}

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "mean_percent": self.mean_percent,
            "per_query": self.per_query,
            "evaluated_queries": self.evaluated_queries,
            "skipped_queries": self.skipped_queries,
            "zero_relevant_queries": self.zero_relevant_queries,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def format_table(self) -> str:
        lines = [f"{'metric':<12} {'mean':>8} {'mean%':>8}"]
        for label, value in self.mean.items():
            lines.append(f"{label:<12} {value:8.4f} {100.0 * value:8.2f}")
        lines.append(
            f"evaluated={self.evaluated_queries} skipped={len(self.skipped_queries)} "
            f"zero_relevant={len(self.zero_relevant_queries)}"
        )
        return "\n".join(lines)


def metric_labels(
    ndcg_map_cutoffs=NDCG_MAP_CUTOFFS, recall_cutoffs=RECALL_CUTOFFS
) -> list[tuple[str, str, int]]:
    labels = []
    for k in ndcg_map_cutoffs:
        labels.append((f"NDCG@{k}", "ndcg", k))
    for k in ndcg_map_cutoffs:
        labels.append((f"MAP@{k}", "map", k))
    for k in recall_cutoffs:
        labels.append((f"R@{k}", "recall", k))
    return labels


_METRIC_FNS = {"ndcg": ndcg_at_k, "map": map_at_k, "recall": recall_at_k}


def evaluate_run(
    run: list[RankedList],
    qrels: Qrels,
    ndcg_map_cutoffs=NDCG_MAP_CUTOFFS,
    recall_cutoffs=RECALL_CUTOFFS,
) -> MetricReport:
    """Score a run against judgments at every (metric, cutoff) pair."""
    seen = set()
    for ranked in run:
        if ranked.query_id in seen:
            raise DataError(f"run contains query {ranked.query_id!r} twice")
        seen.add(ranked.query_id)

    labels = metric_labels(ndcg_map_cutoffs, recall_cutoffs)
    report = MetricReport()
    sums = {label: 0.0 for label, _, _ in labels}
    for ranked in run:
        if not qrels.has_query(ranked.query_id):
            report.skipped_queries.append(ranked.query_id)
            continue
        if qrels.relevant_count(ranked.query_id) == 0:
            report.zero_relevant_queries.append(ranked.query_id)
            continue
        values = {}
        for label, kind, k in labels:
            value = _METRIC_FNS[kind](ranked, qrels, k)
            values[label] = value
            sums[label] += value
        report.per_query[ranked.query_id] = values
        report.evaluated_queries += 1
    if report.evaluated_queries:
        report.mean = {label: sums[label] / report.evaluated_queries for label, _, _ in labels}
    else:
        report.mean = {label: 0.0 for label, _, _ in labels}
    return report


# ---------------------------------------------------------------------------
# TREC-format files. Both writers emit canonical, byte-stable output so that
# write -> read -> write is the identity on bytes.
# ---------------------------------------------------------------------------

def write_qrels(qrels: Qrels, path) -> None:
    """One judgment per line: "query_id 0 doc_id grade", sorted."""
    with open(path, "w", encoding="utf-8") as f:
        for qid in qrels.query_ids():
            for did in sorted(qrels.judged(qid)):
                f.write(f"{qid} 0 {did} {qrels.grade(qid, did)}\n")


def read_qrels(path) -> Qrels:
    qrels = Qrels()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(
                    f"expected 'query_id 0 doc_id grade', got {len(parts)} fields",
                    path=path,
                    line=lineno,
                )
            qid, _, did, grade = parts
            try:
                qrels.add(qid, did, int(grade))
            except (ValueError, DataError) as exc:
                raise ParseError(str(exc), path=path, line=lineno) from exc
    return qrels


def write_run(run: list[RankedList], path, tag: str = "lsrkit") -> None:
    """TREC run lines "query_id Q0 doc_id rank score tag", 6-decimal scores."""
    if any(ch.isspace() for ch in tag) or not tag:
        raise DataError(f"run tag {tag!r} must be non-empty and whitespace-free")
    with open(path, "w", encoding="utf-8") as f:
        for ranked in sorted(run, key=lambda r: r.query_id):
            for rank, (doc_id, score) in enumerate(ranked.hits, start=1):
                f.write(f"{ranked.query_id} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def read_run(path) -> tuple[list[RankedList], str | None]:
    """Parse a TREC run file; returns the ranked lists and the run tag."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    tag = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(
                    f"expected 'query_id Q0 doc_id rank score tag', got {len(parts)} fields",
                    path=path,
                    line=lineno,
                )
            qid, _, did, rank, score, line_tag = parts
            if tag is None:
                tag = line_tag
            elif tag != line_tag:
                raise ParseError(f"mixed run tags {tag!r} and {line_tag!r}", path=path, line=lineno)
            try:
                rows.setdefault(qid, []).append((int(rank), did, float(score)))
            except ValueError as exc:
                raise ParseError(f"bad rank or score: {exc}", path=path, line=lineno) from exc
    run = []
    for qid in sorted(rows):
        ordered = sorted(rows[qid])
        if [r for r, _, _ in ordered] != list(range(1, len(ordered) + 1)):
            raise ParseError(f"ranks for query {qid!r} are not 1..n", path=path)
        run.append(RankedList(qid, [(did, score) for _, did, score in ordered]))
    return run, tag
