"""Deterministic synthetic corpora for tests, benchmarks, and demos.

``separable_corpus`` builds a class-structured retrieval task where every
query shares a per-pair unique token with exactly its positive document and
a class token with a small group of documents. It is linearly separable, so
a few epochs of contrastive training must drive the loss down and lift
held-out recall well above the random baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SparseVector, Vocabulary, tokenize
from .embeddings import FileEmbeddingProvider, ToyEmbeddingProvider, write_embedding_file
from .evaluation import Qrels, write_qrels
from .ingest import DocumentRecord, QueryRecord, save_corpus, save_queries
from .training import TrainingPair, save_pairs


@dataclass
class SyntheticTask:
    vocab: Vocabulary
    queries: list[QueryRecord]
    docs: list[DocumentRecord]
    pairs: list[TrainingPair]
    qrels: Qrels
    image_provider: FileEmbeddingProvider
    dimension: int
    seed: int

    def queries_by_id(self) -> dict[str, QueryRecord]:
        return {q.id: q for q in self.queries}

    def docs_by_id(self) -> dict[str, DocumentRecord]:
        return {d.id: d for d in self.docs}

    def write_files(self, directory) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "vocab": directory / "vocab.txt",
            "queries": directory / "queries.jsonl",
            "corpus": directory / "corpus.jsonl",
            "pairs": directory / "pairs.tsv",
            "qrels": directory / "qrels.txt",
            "image_embeddings": directory / "image_embeddings.jsonl",
        }
        self.vocab.save(paths["vocab"])
        save_queries(paths["queries"], self.queries)
        save_corpus(paths["corpus"], self.docs)
        save_pairs(paths["pairs"], self.pairs)
        write_qrels(self.qrels, paths["qrels"])
        write_embedding_file(
            paths["image_embeddings"],
            self.dimension,
            ((ref, self.image_provider.get(ref)) for ref in sorted(self.image_provider.ids())),
        )
        return paths


def separable_corpus(
    n_pairs: int = 256, n_classes: int = 32, dimension: int = 16, seed: int = 7
) -> SyntheticTask:
    """Queries "u<i> c<g> shared0", captions "u<i> c<g> shared1"; image = pooled caption."""
    terms = (
        [f"u{i}" for i in range(n_pairs)]
        + [f"c{g}" for g in range(n_classes)]
        + ["shared0", "shared1"]
    )
    vocab = Vocabulary(terms)
    toy = ToyEmbeddingProvider(dimension, seed)

    width = len(str(n_pairs - 1))
    queries = []
    docs = []
    pairs = []
    qrels = Qrels()
    image_vectors = {}
    for i in range(n_pairs):
        g = i % n_classes
        qid, did = f"q{i:0{width}d}", f"d{i:0{width}d}"
        ref = f"img{i:0{width}d}"
        caption = f"u{i} c{g} shared1"
        queries.append(
            QueryRecord(
                id=qid,
                page_title=f"u{i}",
                section_title=f"c{g}",
                context_page_description=f"never used {i}",
                context_section_description="shared0",
            )
        )
        docs.append(DocumentRecord(id=did, caption=caption, image_embedding_ref=ref))
        pairs.append(TrainingPair(qid, did))
        qrels.add(qid, did, 1)
        image_vectors[ref] = toy.embed_pooled(ref, tokenize(caption, vocab))

    provider = FileEmbeddingProvider(dimension, image_vectors, source="<synthetic>")
    return SyntheticTask(vocab, queries, docs, pairs, qrels, provider, dimension, seed)


def random_vectors(
    count: int, vocab_size: int, seed: int, min_nnz: int = 1, max_nnz: int = 32, id_prefix: str = "d"
) -> list[tuple[str, SparseVector]]:
    """Random positive sparse vectors with ids like d0007 (sortable)."""
    rng = np.random.default_rng(seed)
    width = len(str(max(count - 1, 1)))
    out = []
    for i in range(count):
        nnz = int(rng.integers(min_nnz, min(max_nnz, vocab_size) + 1))
        ids = np.sort(rng.choice(vocab_size, size=nnz, replace=False)).astype(np.int64)
        weights = rng.uniform(0.05, 4.0, nnz)
        out.append((f"{id_prefix}{i:0{width}d}", SparseVector(ids, weights)))
    return out
