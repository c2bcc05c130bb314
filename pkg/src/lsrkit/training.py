"""Contrastive training of the sparse heads with in-batch negatives.

One batch of B aligned (query, document) pairs yields a B x B score matrix
S[i][j] = <query_i, doc_j>; the diagonal holds the positives. The loss is
the mean over rows of -log softmax(S[i]/tau)[i], optionally plus
flops_lambda times a sparsity penalty on the document vectors
(sum over terms of the squared batch-mean weight).

Gradients are derived by hand and verified against central finite
differences (see ``finite_diff_check``). With G = (softmax(S/tau) - I)/(B*tau):

* upstream on query vectors:    GQ = G  @ D_dense
* upstream on document vectors: GD = G' @ Q_dense  (+ 2*lambda*mean/B)

and per head, writing s = relu(z) for the MLP's per-occurrence score:

* MLP:  dW += sum_j g[t_j] * 1[z_j > 0] / (z_j + 1) * h_j,   db likewise
* MLM:  dE[i] += g[i] * h0 and dbias[i] += g[i] over active rows i
  (rows clamped by ReLU or dropped by top-k truncation get no gradient).

The ReLU subgradient at exactly 0 is taken as 0, so verification instances
are sampled away from the kink (see ``random_check_instance``).

The optimizer is plain SGD with a fixed learning rate; runs are bit
reproducible from (seed, config, data).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .core import SparseVector, tokenize
from .encoders import (
    EncoderConfig,
    MlmHeadParams,
    MlpHeadParams,
    ModelParams,
    Providers,
    init_params,
    mlm_activations,
    mlp_token_scores,
    truncate_top_k,
)
from .errors import ContractError, DataError, ParseError
from .ingest import DocumentRecord, QueryRecord, build_query_text

# ---------------------------------------------------------------------------
# Configuration and pair files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 0.05
    temperature: float = 1.0
    seed: int = 0
    flops_lambda: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be >= 1")
        if self.temperature <= 0:
            raise ContractError("temperature must be > 0")
        if self.learning_rate < 0 or self.flops_lambda < 0:
            raise ContractError("learning_rate and flops_lambda must be >= 0")
        if self.seed < 0:
            raise ContractError("seed must be >= 0")

    @classmethod
    def load(cls, path) -> "TrainingConfig":
        with open(path, encoding="utf-8") as f:
            try:
                obj = json.load(f)
            except ValueError as exc:
                raise ParseError(f"bad training config: {exc}", path=path) from exc
        known = {k: obj[k] for k in
                 ("epochs", "batch_size", "learning_rate", "temperature", "seed", "flops_lambda")
                 if k in obj}
        return cls(**known)


@dataclass(frozen=True)
class TrainingPair:
    query_id: str
    doc_id: str


def load_pairs(path) -> list[TrainingPair]:
    """Pairs file: one "query_id<TAB>doc_id" per line."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError("expected 'query_id<TAB>doc_id'", path=path, line=lineno)
            pairs.append(TrainingPair(parts[0], parts[1]))
    return pairs


def save_pairs(path, pairs: list[TrainingPair]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(f"{pair.query_id}\t{pair.doc_id}\n")


# ---------------------------------------------------------------------------
# Loss terms (public operations)
# ---------------------------------------------------------------------------


def infonce_loss(scores: np.ndarray, temperature: float = 1.0) -> float:
    """Mean over rows of -log softmax(row/tau)[diagonal], max-stabilized."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ContractError(f"score matrix must be square, got {scores.shape}")
    if temperature <= 0:
        raise ContractError("temperature must be > 0")
    logits = scores / temperature
    row_max = logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits - row_max).sum(axis=1)) + row_max[:, 0]
    return float(np.mean(log_norm - np.diag(logits)))


def flops_penalty(batch_vectors: list[SparseVector], vocab_size: int) -> float:
    """Sum over terms of the squared batch-mean weight."""
    if not batch_vectors:
        return 0.0
    total = np.zeros(vocab_size, dtype=np.float64)
    for vec in batch_vectors:
        vec.check_vocab(vocab_size)
        total[vec.ids] += vec.weights
    mean = total / len(batch_vectors)
    return float(np.dot(mean, mean))


# ---------------------------------------------------------------------------
# Resolved batches: encoder inputs with all embeddings already looked up,
# so the forward pass is a pure function of the head parameters.
# ---------------------------------------------------------------------------


@dataclass
class HeadInput:
    """Inputs for one head application. kind 'mlp' uses (token_ids, H); 'mlm' uses h0."""

    kind: str
    token_ids: np.ndarray | None = None  # (L,) int64
    H: np.ndarray | None = None  # (L, d)
    h0: np.ndarray | None = None  # (d,)


@dataclass
class BatchItem:
    query: HeadInput
    caption: HeadInput | None = None
    image: HeadInput | None = None


def resolve_pairs(
    pairs: list[TrainingPair],
    queries_by_id: dict[str, QueryRecord],
    docs_by_id: dict[str, DocumentRecord],
    config: EncoderConfig,
    providers: Providers,
) -> list[BatchItem]:
    """Look up records and embeddings for every pair; fails before training starts."""
    items = []
    for pair in pairs:
        query = queries_by_id.get(pair.query_id)
        doc = docs_by_id.get(pair.doc_id)
        if query is None:
            raise DataError(f"training pair references unknown query id {pair.query_id!r}")
        if doc is None:
            raise DataError(f"training pair references unknown doc id {pair.doc_id!r}")

        qtokens = tokenize(build_query_text(query), providers.vocab)
        if config.query_head == "mlm":
            provider = providers.query_pooled if providers.query_pooled is not None else providers.tokens
            qinput = HeadInput("mlm", h0=provider.embed_pooled(pair.query_id, qtokens))
        else:
            qinput = _mlp_input(qtokens, providers)

        caption = None
        image = None
        if config.uses_caption:
            if doc.caption is None:
                raise DataError(f"document {doc.id!r} has no caption (required by {config.variant})")
            caption = _mlp_input(tokenize(doc.caption, providers.vocab), providers)
        if config.uses_image:
            if doc.image_embedding_ref is None:
                raise DataError(
                    f"document {doc.id!r} has no image embedding (required by {config.variant})"
                )
            if providers.image_pooled is None:
                raise ContractError(f"{config.variant} needs an image embedding provider")
            image = HeadInput("mlm", h0=providers.image_pooled.embed_pooled(doc.image_embedding_ref, None))
        items.append(BatchItem(query=qinput, caption=caption, image=image))
    return items


def _mlp_input(tokens, providers: Providers) -> HeadInput:
    token_ids = np.asarray(tokens.token_ids, dtype=np.int64)
    if token_ids.size:
        H = np.vstack(providers.tokens.embed_tokens(tokens))
    else:
        H = np.zeros((0, providers.tokens.dimension), dtype=np.float64)
    return HeadInput("mlp", token_ids=token_ids, H=H)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class _HeadCache:
    inp: HeadInput
    z: np.ndarray | None = None  # MLP pre-ReLU scores per occurrence
    active: np.ndarray | None = None  # MLM surviving term ids
    dense: np.ndarray | None = None  # dense output vector (V,)


@dataclass
class BatchForward:
    infonce: float
    flops: float  # contribution already scaled by flops_lambda
    total: float
    scores: np.ndarray
    query_dense: np.ndarray  # (B, V)
    doc_dense: np.ndarray  # (B, V)
    query_caches: list[_HeadCache]
    caption_caches: list[_HeadCache | None]
    image_caches: list[_HeadCache | None]


@dataclass
class Gradients:
    dW: np.ndarray | None = None
    db: float = 0.0
    dE: np.ndarray | None = None
    dbias: np.ndarray | None = None


def _apply_head(inp: HeadInput, params: ModelParams, config: EncoderConfig, vocab_size: int) -> _HeadCache:
    cache = _HeadCache(inp=inp)
    dense = np.zeros(vocab_size, dtype=np.float64)
    if inp.kind == "mlp":
        head = params.require_mlp()
        z = mlp_token_scores(inp.H, head)
        cache.z = z
        np.add.at(dense, inp.token_ids, np.log1p(np.maximum(z, 0.0)))
        # Entries that accumulate to exactly 0 are "not stored"; keep the
        # dense form (they are zero there anyway).
    else:
        head = params.require_mlm()
        activations = mlm_activations(inp.h0, head)
        vec = truncate_top_k(SparseVector.from_dense(np.maximum(activations, 0.0)), config.mlm_top_k)
        cache.active = vec.ids
        dense[vec.ids] = vec.weights
    cache.dense = dense
    return cache


def forward_batch(
    items: list[BatchItem],
    params: ModelParams,
    config: EncoderConfig,
    tcfg: TrainingConfig,
    vocab_size: int,
) -> BatchForward:
    B = len(items)
    if B == 0:
        raise ContractError("empty batch")
    query_caches = []
    caption_caches: list[_HeadCache | None] = []
    image_caches: list[_HeadCache | None] = []
    Q = np.zeros((B, vocab_size), dtype=np.float64)
    D = np.zeros((B, vocab_size), dtype=np.float64)
    for i, item in enumerate(items):
        qc = _apply_head(item.query, params, config, vocab_size)
        query_caches.append(qc)
        Q[i] = qc.dense
        cc = _apply_head(item.caption, params, config, vocab_size) if item.caption else None
        ic = _apply_head(item.image, params, config, vocab_size) if item.image else None
        caption_caches.append(cc)
        image_caches.append(ic)
        if cc is not None and ic is not None:
            D[i] = cc.dense + ic.dense if config.fusion == "sum" else np.maximum(cc.dense, ic.dense)
        elif ic is not None:
            D[i] = ic.dense
        elif cc is not None:
            D[i] = cc.dense
        else:
            raise ContractError("document item produced no vector")

    scores = Q @ D.T
    nce = infonce_loss(scores, tcfg.temperature)
    flops_term = 0.0
    if tcfg.flops_lambda > 0.0:
        mean = D.mean(axis=0)
        flops_term = tcfg.flops_lambda * float(np.dot(mean, mean))
    return BatchForward(
        infonce=nce,
        flops=flops_term,
        total=nce + flops_term,
        scores=scores,
        query_dense=Q,
        doc_dense=D,
        query_caches=query_caches,
        caption_caches=caption_caches,
        image_caches=image_caches,
    )


def _backprop_head(cache: _HeadCache, upstream: np.ndarray, params: ModelParams, grads: Gradients) -> None:
    inp = cache.inp
    if inp.kind == "mlp":
        z = cache.z
        mask = z > 0.0
        if not mask.any():
            return
        coef = upstream[inp.token_ids[mask]] / (z[mask] + 1.0)
        grads.dW += inp.H[mask].T @ coef
        grads.db += float(coef.sum())
    else:
        active = cache.active
        if active is None or active.size == 0:
            return
        coef = upstream[active]
        grads.dE[active] += coef[:, None] * inp.h0[None, :]
        grads.dbias[active] += coef


def backward_batch(
    items: list[BatchItem],
    fwd: BatchForward,
    params: ModelParams,
    config: EncoderConfig,
    tcfg: TrainingConfig,
) -> Gradients:
    B = len(items)
    logits = fwd.scores / tcfg.temperature
    row_max = logits.max(axis=1, keepdims=True)
    expd = np.exp(logits - row_max)
    softmax = expd / expd.sum(axis=1, keepdims=True)
    G = (softmax - np.eye(B)) / (B * tcfg.temperature)

    GQ = G @ fwd.doc_dense
    GD = G.T @ fwd.query_dense
    if tcfg.flops_lambda > 0.0:
        mean = fwd.doc_dense.mean(axis=0)
        GD += (2.0 * tcfg.flops_lambda / B) * mean[None, :]

    grads = Gradients()
    if params.mlp is not None:
        grads.dW = np.zeros_like(params.mlp.W)
    if params.mlm is not None:
        grads.dE = np.zeros_like(params.mlm.E)
        grads.dbias = np.zeros_like(params.mlm.bias)

    for i in range(B):
        _backprop_head(fwd.query_caches[i], GQ[i], params, grads)
        cc = fwd.caption_caches[i]
        ic = fwd.image_caches[i]
        if cc is not None and ic is not None:
            if config.fusion == "sum":
                _backprop_head(cc, GD[i], params, grads)
                _backprop_head(ic, GD[i], params, grads)
            else:
                # max fusion: the winning branch takes the gradient;
                # exact ties go to the caption side.
                cap_wins = cc.dense >= ic.dense
                _backprop_head(cc, GD[i] * cap_wins, params, grads)
                _backprop_head(ic, GD[i] * ~cap_wins, params, grads)
        elif ic is not None:
            _backprop_head(ic, GD[i], params, grads)
        elif cc is not None:
            _backprop_head(cc, GD[i], params, grads)
    return grads


def backward(
    items: list[BatchItem],
    params: ModelParams,
    config: EncoderConfig,
    tcfg: TrainingConfig,
    vocab_size: int,
) -> tuple[BatchForward, Gradients]:
    """Forward + analytic gradients for one batch."""
    fwd = forward_batch(items, params, config, tcfg, vocab_size)
    return fwd, backward_batch(items, fwd, params, config, tcfg)


# ---------------------------------------------------------------------------
# SGD loop
# ---------------------------------------------------------------------------


@dataclass
class LossLogRow:
    step: int
    epoch: int
    infonce: float
    flops: float
    total: float


@dataclass
class TrainOutcome:
    params: ModelParams
    log: list[LossLogRow] = field(default_factory=list)

    def epoch_mean_infonce(self, epoch: int) -> float:
        rows = [r.infonce for r in self.log if r.epoch == epoch]
        if not rows:
            raise ContractError(f"no logged steps for epoch {epoch}")
        return sum(rows) / len(rows)


def write_loss_log(path, log: list[LossLogRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "epoch", "infonce", "flops", "total"])
        for row in log:
            writer.writerow([row.step, row.epoch, repr(row.infonce), repr(row.flops), repr(row.total)])


def _sgd_update(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    mlp = params.mlp
    mlm = params.mlm
    if mlp is not None and grads.dW is not None:
        mlp = MlpHeadParams(W=mlp.W - lr * grads.dW, b=mlp.b - lr * grads.db)
    if mlm is not None and grads.dE is not None:
        mlm = MlmHeadParams(E=mlm.E - lr * grads.dE, bias=mlm.bias - lr * grads.dbias)
    return ModelParams(mlp=mlp, mlm=mlm)


def train(
    pairs: list[TrainingPair],
    queries_by_id: dict[str, QueryRecord],
    docs_by_id: dict[str, DocumentRecord],
    tcfg: TrainingConfig,
    config: EncoderConfig,
    providers: Providers,
    initial_params: ModelParams | None = None,
) -> TrainOutcome:
    """Run epochs x ceil(N/B) SGD steps; deterministic given (seed, config, data)."""
    if not pairs:
        raise DataError("no training pairs")
    items = resolve_pairs(pairs, queries_by_id, docs_by_id, config, providers)
    vocab_size = providers.vocab.size
    if initial_params is None:
        params = init_params(config, vocab_size, providers.tokens.dimension, tcfg.seed)
    else:
        params = ModelParams(mlp=initial_params.mlp, mlm=initial_params.mlm)

    rng = np.random.default_rng(tcfg.seed)
    outcome = TrainOutcome(params=params)
    step = 0
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(items))
        for start in range(0, len(items), tcfg.batch_size):
            batch = [items[i] for i in order[start : start + tcfg.batch_size]]
            fwd, grads = backward(batch, params, config, tcfg, vocab_size)
            params = _sgd_update(params, grads, tcfg.learning_rate)
            step += 1
            outcome.log.append(LossLogRow(step, epoch, fwd.infonce, fwd.flops, fwd.total))
    outcome.params = params
    return outcome


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def _loss_for(params: ModelParams, items, config, tcfg, vocab_size) -> float:
    return forward_batch(items, params, config, tcfg, vocab_size).total


def _relative_error(analytic: float, numeric: float, tiny: float = 1e-8) -> float:
    # Below ``tiny`` both values are in cancellation/finite-difference noise
    # territory (e.g. a term active in every batch document has an exactly
    # shift-invariant bias, leaving ~1e-17 dust in the analytic sum), so the
    # absolute difference is the meaningful error there.
    scale = max(abs(analytic), abs(numeric))
    if scale < tiny:
        return abs(analytic - numeric)
    return abs(analytic - numeric) / scale


def finite_diff_check(
    params: ModelParams,
    items: list[BatchItem],
    config: EncoderConfig,
    tcfg: TrainingConfig,
    vocab_size: int,
    epsilon: float = 1e-5,
    max_coords_per_tensor: int | None = None,
    seed: int = 0,
) -> float:
    """Worst relative error of analytic gradients vs central differences.

    Checks every coordinate by default; ``max_coords_per_tensor`` samples a
    deterministic subset for larger heads. The relative error falls back to
    the absolute error when the analytic gradient is exactly zero.
    """
    if not (0.0 < epsilon <= 1e-3):
        raise ContractError("epsilon must lie in (0, 1e-3]")
    _, grads = backward(items, params, config, tcfg, vocab_size)
    rng = np.random.default_rng(seed)
    worst = 0.0

    def check_array(array: np.ndarray, grad: np.ndarray):
        nonlocal worst
        flat = array.reshape(-1)
        gflat = grad.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_tensor is not None and flat.size > max_coords_per_tensor:
            coords = np.sort(rng.choice(flat.size, size=max_coords_per_tensor, replace=False))
        for c in coords:
            keep = flat[c]
            flat[c] = keep + epsilon
            up = _loss_for(params, items, config, tcfg, vocab_size)
            flat[c] = keep - epsilon
            down = _loss_for(params, items, config, tcfg, vocab_size)
            flat[c] = keep
            numeric = (up - down) / (2.0 * epsilon)
            worst = max(worst, _relative_error(float(gflat[c]), numeric))

    if params.mlp is not None:
        check_array(params.mlp.W, grads.dW)
        keep_b = params.mlp.b
        params.mlp.b = keep_b + epsilon
        up = _loss_for(params, items, config, tcfg, vocab_size)
        params.mlp.b = keep_b - epsilon
        down = _loss_for(params, items, config, tcfg, vocab_size)
        params.mlp.b = keep_b
        numeric = (up - down) / (2.0 * epsilon)
        worst = max(worst, _relative_error(grads.db, numeric))
    if params.mlm is not None:
        check_array(params.mlm.E, grads.dE)
        check_array(params.mlm.bias, grads.dbias)
    return worst


def random_check_instance(
    seed: int,
    dimension: int = 8,
    vocab_size: int = 32,
    batch_size: int = 4,
    config: EncoderConfig | None = None,
    tcfg: TrainingConfig | None = None,
    kink_margin: float = 1e-3,
    max_tries: int = 200,
) -> tuple[ModelParams, list[BatchItem], EncoderConfig, TrainingConfig]:
    """Sample a gradient-check instance with all pre-activations off the ReLU kink.

    Instances are rejected until every MLP occurrence score and every MLM
    activation has magnitude above ``kink_margin``, keeping the loss smooth
    in an epsilon-neighborhood.
    """
    config = config or EncoderConfig(variant="M2")
    tcfg = tcfg or TrainingConfig(seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        params = ModelParams()
        if config.query_head == "mlp" or config.uses_caption:
            params.mlp = MlpHeadParams(W=rng.normal(0, 1, dimension), b=rng.normal(0, 0.5))
        if config.variant in ("M1", "M2", "M4"):
            params.mlm = MlmHeadParams(
                E=rng.normal(0, 1, (vocab_size, dimension)), bias=rng.normal(0, 0.5, vocab_size)
            )
        items = []
        for _ in range(batch_size):
            n_tokens = int(rng.integers(2, 6))
            token_ids = rng.integers(0, vocab_size, n_tokens).astype(np.int64)
            H = rng.normal(0, 1, (n_tokens, dimension)) / np.sqrt(dimension)
            if config.query_head == "mlp":
                query = HeadInput("mlp", token_ids=token_ids, H=H)
            else:
                h0 = rng.normal(0, 1, dimension)
                query = HeadInput("mlm", h0=h0 / np.linalg.norm(h0))
            caption = None
            image = None
            if config.uses_caption:
                m = int(rng.integers(2, 6))
                caption = HeadInput(
                    "mlp",
                    token_ids=rng.integers(0, vocab_size, m).astype(np.int64),
                    H=rng.normal(0, 1, (m, dimension)) / np.sqrt(dimension),
                )
            if config.uses_image:
                h0 = rng.normal(0, 1, dimension)
                image = HeadInput("mlm", h0=h0 / np.linalg.norm(h0))
            items.append(BatchItem(query=query, caption=caption, image=image))
        if _off_kink(params, items, kink_margin):
            return params, items, config, tcfg
    raise ContractError(f"could not sample an off-kink instance in {max_tries} tries")


def _off_kink(params: ModelParams, items: list[BatchItem], margin: float) -> bool:
    for item in items:
        for inp in (item.query, item.caption, item.image):
            if inp is None:
                continue
            if inp.kind == "mlp":
                z = mlp_token_scores(inp.H, params.require_mlp())
                if z.size and np.min(np.abs(z)) <= margin:
                    return False
            else:
                a = mlm_activations(inp.h0, params.require_mlm())
                if np.min(np.abs(a)) <= margin:
                    return False
    return True


# ---------------------------------------------------------------------------
# Checkpoints: parameter file + {"epoch": n, "seed": s} manifest.
# ---------------------------------------------------------------------------


def save_checkpoint(directory, params: ModelParams, epoch: int, seed: int) -> None:
    from pathlib import Path

    from .encoders import save_params

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_params(directory / "params.jsonl", params)
    with open(directory / "manifest.json", "w", encoding="utf-8") as f:
        json.dump({"epoch": epoch, "seed": seed}, f)
        f.write("\n")


def load_checkpoint(directory) -> tuple[ModelParams, dict]:
    from pathlib import Path

    from .encoders import load_params

    directory = Path(directory)
    params = load_params(directory / "params.jsonl")
    with open(directory / "manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    return params, manifest
