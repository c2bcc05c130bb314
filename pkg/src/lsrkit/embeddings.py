"""Embedding providers: the pluggable stand-in for a dense backbone.

Two kinds:

* ``ToyEmbeddingProvider`` -- fully deterministic, context-free embeddings.
  The recipe is part of the public contract so results can be reproduced
  outside this package: token ``t`` under global seed ``s`` maps to
  ``default_rng(SeedSequence([s, t])).standard_normal(d)`` scaled to unit
  Euclidean length (PCG64 generator, numpy's stable SeedSequence mixing).
  Pooled vectors are the arithmetic mean of the token embeddings,
  renormalized to unit length.

* ``FileEmbeddingProvider`` -- precomputed vectors loaded from a JSONL file:
  a header line ``{"dim": d}`` (extra header keys are ignored) followed by
  ``{"id": "...", "values": [...]}`` records. Token-level files key records
  by the decimal term id; item-level files key by corpus/query id.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .core import TokenSequence
from .errors import ContractError, DataError, MissingRecordError, ParseError


class ToyEmbeddingProvider:
    """Deterministic pseudo-random unit embeddings keyed by (seed, token id)."""

    kind = "toy-deterministic"

    def __init__(self, dimension: int, seed: int = 0):
        if dimension <= 0:
            raise ContractError("embedding dimension must be positive")
        if seed < 0:
            raise ContractError("toy embedding seed must be >= 0")
        self.dimension = int(dimension)
        self.seed = int(seed)
        self._cache: dict[int, np.ndarray] = {}

    def _token_embedding(self, token_id: int) -> np.ndarray:
        vec = self._cache.get(token_id)
        if vec is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, int(token_id)]))
            vec = rng.standard_normal(self.dimension)
            vec /= np.linalg.norm(vec)
            vec.setflags(write=False)
            self._cache[token_id] = vec
        return vec

    def embed_tokens(self, tokens: TokenSequence) -> list[np.ndarray]:
        return [self._token_embedding(t) for t in tokens]

    def embed_pooled(self, item_id: str | None, fallback_tokens: TokenSequence | None) -> np.ndarray:
        """Mean of the token embeddings, renormalized to unit length.

        Toy mode has no per-item store, so pooling requires a non-empty
        token sequence; ``item_id`` is accepted for interface parity only.
        """
        if fallback_tokens is None or len(fallback_tokens) == 0:
            raise ContractError(
                f"toy pooled embedding needs a non-empty token sequence (item {item_id!r})"
            )
        mean = np.mean(self.embed_tokens(fallback_tokens), axis=0)
        return mean / np.linalg.norm(mean)


class FileEmbeddingProvider:
    """Vectors preloaded from a JSONL embedding file, keyed by record id."""

    kind = "file-backed"

    def __init__(self, dimension: int, vectors: dict[str, np.ndarray], source=None):
        if dimension <= 0:
            raise ContractError("embedding dimension must be positive")
        self.dimension = int(dimension)
        self.source = source
        self._vectors = vectors

    @classmethod
    def load(cls, path) -> "FileEmbeddingProvider":
        with open(path, encoding="utf-8") as f:
            header_line = f.readline()
            if not header_line.strip():
                raise ParseError("missing embedding-file header", path=path, line=1)
            try:
                header = json.loads(header_line)
                dim = int(header["dim"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"bad embedding-file header: {exc}", path=path, line=1) from exc
            vectors: dict[str, np.ndarray] = {}
            for lineno, line in enumerate(f, start=2):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    rec_id = obj["id"]
                    values = np.asarray(obj["values"], dtype=np.float64)
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(f"bad embedding record: {exc}", path=path, line=lineno) from exc
                if values.shape != (dim,):
                    raise DataError(
                        f"{path}:{lineno}: embedding for id {rec_id!r} has length "
                        f"{values.size}, expected {dim}"
                    )
                if not np.all(np.isfinite(values)):
                    raise DataError(f"{path}:{lineno}: non-finite embedding for id {rec_id!r}")
                if rec_id in vectors:
                    raise DataError(f"{path}:{lineno}: duplicate embedding id {rec_id!r}")
                values.setflags(write=False)
                vectors[rec_id] = values
        return cls(dim, vectors, source=path)

    def __contains__(self, rec_id: str) -> bool:
        return rec_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> set[str]:
        return set(self._vectors)

    def get(self, rec_id: str) -> np.ndarray:
        vec = self._vectors.get(rec_id)
        if vec is None:
            raise MissingRecordError(f"no embedding for id {rec_id!r} in {self.source or 'embedding file'}")
        return vec

    def embed_tokens(self, tokens: TokenSequence) -> list[np.ndarray]:
        """Per-token lookup; token-level files key ids as the decimal term id."""
        return [self.get(str(t)) for t in tokens]

    def embed_pooled(self, item_id: str | None, fallback_tokens: TokenSequence | None = None) -> np.ndarray:
        if item_id is None:
            raise ContractError("file-backed pooled embedding requires an item id")
        return self.get(item_id)


EmbeddingProvider = ToyEmbeddingProvider | FileEmbeddingProvider


def embed_tokens(provider: EmbeddingProvider, tokens: TokenSequence) -> list[np.ndarray]:
    return provider.embed_tokens(tokens)


def embed_pooled(
    provider: EmbeddingProvider, item_id: str | None, fallback_tokens: TokenSequence | None = None
) -> np.ndarray:
    return provider.embed_pooled(item_id, fallback_tokens)


def write_embedding_file(path, dimension: int, records: Iterable[tuple[str, Sequence[float]]],
                         header_extra: dict | None = None) -> None:
    """Write the JSONL embedding format (header line, then one record per id)."""
    header = {"dim": int(dimension)}
    if header_extra:
        header.update(header_extra)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for rec_id, values in records:
            f.write(json.dumps({"id": rec_id, "values": [float(v) for v in values]}) + "\n")
