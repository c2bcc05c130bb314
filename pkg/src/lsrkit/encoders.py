"""Sparse projection heads and the four bi-encoder configurations.

Two heads produce term-weight vectors from dense embeddings:

* MLP head: per input token j, a scalar score ``relu(h_j . W + b)``; the
  weight of vocabulary term i is ``sum_j log(score_j + 1)`` over occurrences
  of i (natural log). The output support is always a subset of the input
  tokens -- this head cannot expand.

* MLM head: from one pooled vector h0, the weight of every vocabulary term i
  is ``relu(h0 . E[i] + bias[i])``. Any term can activate, so this head can
  expand (and is the only route for images, which enter as pooled vectors).

The bi-encoder variants wire these heads to the query and document sides:

=======  =============  ================  ==============
variant  query           doc caption       doc image
=======  =============  ================  ==============
M1       MLM            --                MLM
M2       MLP            --                MLM
M3       MLP            MLP (query head)  --
M4       MLP            MLP (query head)  MLM
=======  =============  ================  ==============

For M3/M4 the caption head *is* the query head: one parameter set, shared by
reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import SparseVector, TokenSequence, Vocabulary, merge_max, merge_sum, tokenize
from .embeddings import EmbeddingProvider
from .errors import ContractError, DataError, ParseError
from .ingest import DocumentRecord

VARIANTS = ("M1", "M2", "M3", "M4")
FUSION_RULES = ("sum", "max")


@dataclass
class MlpHeadParams:
    """Linear projection of each token embedding to a scalar score."""

    W: np.ndarray  # (d,)
    b: float

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = float(self.b)
        if self.W.ndim != 1 or not np.all(np.isfinite(self.W)) or not np.isfinite(self.b):
            raise ContractError("MLP head needs a finite 1-d weight vector and finite bias")

    @property
    def dim(self) -> int:
        return self.W.size


@dataclass
class MlmHeadParams:
    """Per-vocabulary-term output embeddings and biases."""

    E: np.ndarray  # (|V|, d)
    bias: np.ndarray  # (|V|,)

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.E.ndim != 2 or self.bias.shape != (self.E.shape[0],):
            raise ContractError("MLM head needs E of shape (|V|, d) and bias of shape (|V|,)")
        if not (np.all(np.isfinite(self.E)) and np.all(np.isfinite(self.bias))):
            raise ContractError("MLM head parameters must be finite")

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    @property
    def dim(self) -> int:
        return self.E.shape[1]


@dataclass(frozen=True)
class EncoderConfig:
    variant: str = "M2"
    fusion: str = "sum"  # only M4 combines two document vectors
    mlm_top_k: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.fusion not in FUSION_RULES:
            raise ContractError(f"unknown fusion rule {self.fusion!r}, expected one of {FUSION_RULES}")
        if self.mlm_top_k is not None and self.mlm_top_k < 1:
            raise ContractError("mlm_top_k must be a positive integer or null")

    @property
    def query_head(self) -> str:
        return "mlm" if self.variant == "M1" else "mlp"

    @property
    def uses_caption(self) -> bool:
        return self.variant in ("M3", "M4")

    @property
    def uses_image(self) -> bool:
        return self.variant in ("M1", "M2", "M4")

    @classmethod
    def load(cls, path) -> "EncoderConfig":
        with open(path, encoding="utf-8") as f:
            try:
                obj = json.load(f)
            except ValueError as exc:
                raise ParseError(f"bad encoder config: {exc}", path=path) from exc
        return cls(
            variant=obj.get("variant", "M2"),
            fusion=obj.get("fusion", "sum"),
            mlm_top_k=obj.get("mlm_top_k"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"variant": self.variant, "fusion": self.fusion, "mlm_top_k": self.mlm_top_k}, f)
            f.write("\n")


@dataclass
class ModelParams:
    """The heads a variant needs; M3/M4 reuse ``mlp`` for captions by reference."""

    mlp: MlpHeadParams | None = None
    mlm: MlmHeadParams | None = None

    def require_mlp(self) -> MlpHeadParams:
        if self.mlp is None:
            raise ContractError("this encoder configuration needs MLP head parameters")
        return self.mlp

    def require_mlm(self) -> MlmHeadParams:
        if self.mlm is None:
            raise ContractError("this encoder configuration needs MLM head parameters")
        return self.mlm


def init_params(
    config: EncoderConfig, vocab_size: int, dimension: int, seed: int
) -> ModelParams:
    """Seeded uniform(-1/sqrt(d), 1/sqrt(d)) init for W and E; zero biases.

    Draw order is fixed (W, then E) so trajectories are reproducible.
    """
    if seed < 0:
        raise ContractError("seed must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1717]))
    scale = 1.0 / np.sqrt(dimension)
    need_mlp = config.query_head == "mlp"
    need_mlm = config.variant in ("M1", "M2", "M4")
    mlp = None
    mlm = None
    if need_mlp:
        mlp = MlpHeadParams(W=rng.uniform(-scale, scale, dimension), b=0.0)
    if need_mlm:
        mlm = MlmHeadParams(
            E=rng.uniform(-scale, scale, (vocab_size, dimension)),
            bias=np.zeros(vocab_size),
        )
    return ModelParams(mlp=mlp, mlm=mlm)


# ---------------------------------------------------------------------------
# Head math. The *_raw helpers expose pre-ReLU values so training can reuse
# exactly the same forward computation while keeping gradient caches.
# ---------------------------------------------------------------------------

def mlp_token_scores(H: np.ndarray, params: MlpHeadParams) -> np.ndarray:
    """Pre-ReLU scalar score per input position: H @ W + b."""
    if H.size == 0:
        return np.zeros(0, dtype=np.float64)
    if H.shape[1] != params.dim:
        raise ContractError(f"embedding dim {H.shape[1]} != MLP head dim {params.dim}")
    return H @ params.W + params.b


def mlp_accumulate(token_ids: np.ndarray, z: np.ndarray) -> SparseVector:
    """Sum log1p(relu(z)) per token id; zero totals are omitted."""
    if token_ids.size == 0:
        return SparseVector()
    contrib = np.log1p(np.maximum(z, 0.0))
    ids = np.unique(token_ids)
    weights = np.zeros(ids.size, dtype=np.float64)
    np.add.at(weights, np.searchsorted(ids, token_ids), contrib)
    keep = weights > 0.0
    return SparseVector(ids[keep].astype(np.int64), weights[keep])


def mlp_encode(
    tokens: TokenSequence, embeddings: list[np.ndarray], params: MlpHeadParams
) -> SparseVector:
    """Term-weighting head: scores only the tokens present in the input."""
    if len(tokens) != len(embeddings):
        raise ContractError(
            f"token/embedding length mismatch: {len(tokens)} tokens, {len(embeddings)} embeddings"
        )
    if len(tokens) == 0:
        return SparseVector()
    token_ids = np.asarray(tokens.token_ids, dtype=np.int64)
    H = np.vstack(embeddings)
    z = mlp_token_scores(H, params)
    return mlp_accumulate(token_ids, z)


def mlm_activations(pooled: np.ndarray, params: MlmHeadParams) -> np.ndarray:
    """Pre-ReLU activation for every vocabulary term: E @ h0 + bias."""
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.shape != (params.dim,):
        raise ContractError(f"pooled dim {pooled.shape} != MLM head dim ({params.dim},)")
    return params.E @ pooled + params.bias


def truncate_top_k(vec: SparseVector, top_k: int | None) -> SparseVector:
    """Keep the top_k heaviest entries; ties go to the smaller term id."""
    if top_k is None or vec.nnz <= top_k:
        return vec
    # lexsort: last key is primary. Descending weight, then ascending id.
    order = np.lexsort((vec.ids, -vec.weights))[:top_k]
    keep = np.sort(vec.ids[order])
    pos = np.searchsorted(vec.ids, keep)
    return SparseVector(keep, vec.weights[pos])


def mlm_encode(
    pooled: np.ndarray, params: MlmHeadParams, top_k: int | None = None
) -> SparseVector:
    """Expansion head: may activate any vocabulary term."""
    vec = SparseVector.from_dense(np.maximum(mlm_activations(pooled, params), 0.0))
    return truncate_top_k(vec, top_k)


def fuse_document_vectors(
    caption_vec: SparseVector, image_vec: SparseVector, rule: str = "sum"
) -> SparseVector:
    if rule == "sum":
        return merge_sum(caption_vec, image_vec)
    if rule == "max":
        return merge_max(caption_vec, image_vec)
    raise ContractError(f"unknown fusion rule {rule!r}")


# ---------------------------------------------------------------------------
# Bi-encoder dispatch
# ---------------------------------------------------------------------------

@dataclass
class Providers:
    """Everything the encoders need besides head parameters.

    ``image_pooled`` is how images enter the system (the toolkit never reads
    pixels); ``query_pooled`` optionally overrides M1's query pooling with
    precomputed per-query vectors.
    """

    vocab: Vocabulary
    tokens: EmbeddingProvider
    query_pooled: EmbeddingProvider | None = None
    image_pooled: EmbeddingProvider | None = None


def encode_query(
    query_text: str,
    config: EncoderConfig,
    providers: Providers,
    params: ModelParams,
    query_id: str | None = None,
) -> SparseVector:
    tokens = tokenize(query_text, providers.vocab)
    if config.query_head == "mlm":
        provider = providers.query_pooled if providers.query_pooled is not None else providers.tokens
        if provider is providers.tokens and len(tokens) == 0:
            # Nothing to pool from: a contentless query retrieves nothing.
            return SparseVector()
        pooled = provider.embed_pooled(query_id, tokens)
        return mlm_encode(pooled, params.require_mlm(), config.mlm_top_k)
    embeddings = providers.tokens.embed_tokens(tokens)
    return mlp_encode(tokens, embeddings, params.require_mlp())


def encode_document(
    doc: DocumentRecord,
    config: EncoderConfig,
    providers: Providers,
    params: ModelParams,
) -> SparseVector:
    caption_vec = None
    image_vec = None

    if config.uses_caption:
        if doc.caption is None:
            raise DataError(f"document {doc.id!r} has no caption (required by {config.variant})")
        tokens = tokenize(doc.caption, providers.vocab)
        embeddings = providers.tokens.embed_tokens(tokens)
        # Shared head: the caption side reuses the query MLP parameters.
        caption_vec = mlp_encode(tokens, embeddings, params.require_mlp())

    if config.uses_image:
        if doc.image_embedding_ref is None:
            raise DataError(
                f"document {doc.id!r} has no image embedding (required by {config.variant})"
            )
        if providers.image_pooled is None:
            raise ContractError(
                f"{config.variant} needs an image embedding provider (item-level file)"
            )
        pooled = providers.image_pooled.embed_pooled(doc.image_embedding_ref, None)
        image_vec = mlm_encode(pooled, params.require_mlm(), config.mlm_top_k)

    if caption_vec is not None and image_vec is not None:
        return fuse_document_vectors(caption_vec, image_vec, config.fusion)
    if image_vec is not None:
        return image_vec
    assert caption_vec is not None
    return caption_vec


# ---------------------------------------------------------------------------
# Parameter file: JSONL, one record per head, full-precision floats.
# ---------------------------------------------------------------------------

def save_params(path, params: ModelParams) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if params.mlp is not None:
            f.write(json.dumps({"head": "mlp", "W": params.mlp.W.tolist(), "b": params.mlp.b}) + "\n")
        if params.mlm is not None:
            f.write(
                json.dumps(
                    {"head": "mlm", "E": params.mlm.E.tolist(), "bias": params.mlm.bias.tolist()}
                )
                + "\n"
            )


def load_params(path) -> ModelParams:
    params = ModelParams()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                head = obj["head"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"bad parameter record: {exc}", path=path, line=lineno) from exc
            if head == "mlp":
                params.mlp = MlpHeadParams(W=np.asarray(obj["W"]), b=obj["b"])
            elif head == "mlm":
                params.mlm = MlmHeadParams(E=np.asarray(obj["E"]), bias=np.asarray(obj["bias"]))
            else:
                raise ParseError(f"unknown head kind {head!r}", path=path, line=lineno)
    return params
