import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsrkit.core import SparseVector
from lsrkit.encoders import EncoderConfig, MlmHeadParams, MlpHeadParams, ModelParams
from lsrkit.errors import ContractError, DataError
from lsrkit.training import (
    BatchItem,
    HeadInput,
    TrainingConfig,
    TrainingPair,
    backward,
    finite_diff_check,
    flops_penalty,
    forward_batch,
    infonce_loss,
    load_checkpoint,
    load_pairs,
    random_check_instance,
    save_checkpoint,
    save_pairs,
    train,
    write_loss_log,
)

from conftest import RECIPE


def sv(*pairs):
    return SparseVector.from_pairs(pairs)


# -- infonce_loss -----------------------------------------------------------------


def test_infonce_degenerate_batch_is_zero():
    assert infonce_loss(np.array([[3.7]])) == 0.0


def test_infonce_uniform_scores():
    assert infonce_loss(np.full((4, 4), 2.5)) == pytest.approx(math.log(4.0), abs=1e-12)


def test_infonce_hand_case():
    got = infonce_loss(np.array([[2.0, 0.0], [0.0, 2.0]]), temperature=1.0)
    assert got == pytest.approx(0.12692801104297252, abs=1e-12)


def test_infonce_rejects_non_square():
    with pytest.raises(ContractError):
        infonce_loss(np.zeros((2, 3)))


def test_infonce_nonnegative_and_stable():
    rng = np.random.default_rng(0)
    for _ in range(20):
        scores = rng.normal(0, 100, (5, 5))
        assert infonce_loss(scores) >= 0.0
    assert np.isfinite(infonce_loss(np.array([[1e6, 0.0], [0.0, 1e6]])))


@given(st.integers(0, 10**6), st.floats(-50, 50))
def test_infonce_row_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    scores = rng.normal(0, 3, (4, 4))
    shifted = scores.copy()
    shifted[2] += shift
    assert infonce_loss(shifted) == pytest.approx(infonce_loss(scores), rel=1e-9, abs=1e-9)


# -- flops_penalty ------------------------------------------------------------------


def test_flops_empty_batch():
    assert flops_penalty([], 8) == 0.0
    assert flops_penalty([SparseVector(), SparseVector()], 8) == 0.0


def test_flops_single_vector():
    assert flops_penalty([sv((0, 2.0))], 8) == pytest.approx(4.0)


def test_flops_two_vectors_mean_then_square():
    assert flops_penalty([sv((0, 1.0)), sv((0, 3.0))], 8) == pytest.approx(4.0)


def test_flops_lambda_zero_means_pure_infonce():
    params, items, config, _ = random_check_instance(5)
    plain = TrainingConfig(seed=0, flops_lambda=0.0)
    reg = TrainingConfig(seed=0, flops_lambda=0.7)
    f0 = forward_batch(items, params, config, plain, 32)
    f1 = forward_batch(items, params, config, reg, 32)
    assert f0.total == f0.infonce and f0.flops == 0.0
    assert f1.total >= f1.infonce
    assert f1.infonce == f0.infonce


# -- backward ------------------------------------------------------------------------


def flat_region_instance():
    # Every pre-activation is well below zero: MLP b = -10 with tiny W and
    # unit-scale H; MLM bias = -10 with tiny E.
    d, V, B = 4, 12, 3
    rng = np.random.default_rng(1)
    params = ModelParams(
        mlp=MlpHeadParams(W=rng.normal(0, 0.01, d), b=-10.0),
        mlm=MlmHeadParams(E=rng.normal(0, 0.01, (V, d)), bias=np.full(V, -10.0)),
    )
    items = []
    for _ in range(B):
        token_ids = rng.integers(0, V, 3).astype(np.int64)
        items.append(
            BatchItem(
                query=HeadInput("mlp", token_ids=token_ids, H=rng.normal(0, 1, (3, d))),
                image=HeadInput("mlm", h0=rng.normal(0, 1, d)),
            )
        )
    return params, items, EncoderConfig("M2"), TrainingConfig(seed=0)


def test_backward_flat_region_all_gradients_zero():
    params, items, config, tcfg = flat_region_instance()
    _, grads = backward(items, params, config, tcfg, 12)
    assert np.all(grads.dW == 0.0) and grads.db == 0.0
    assert np.all(grads.dE == 0.0) and np.all(grads.dbias == 0.0)


def test_finite_diff_flat_region_absolute_error():
    params, items, config, tcfg = flat_region_instance()
    assert finite_diff_check(params, items, config, tcfg, 12) < 1e-9


def linear_region_instance():
    # Every ReLU input is comfortably positive, so the loss is smooth and the
    # central difference carries only second-order truncation error.
    d, V, B = 4, 10, 3
    rng = np.random.default_rng(3)
    params = ModelParams(
        mlp=MlpHeadParams(W=rng.normal(0, 0.05, d), b=2.0),
        mlm=MlmHeadParams(E=rng.normal(0, 0.25, (V, d)), bias=np.full(V, 2.0)),
    )
    items = []
    for _ in range(B):
        token_ids = rng.integers(0, V, 4).astype(np.int64)
        h0 = rng.normal(0, 1, d)
        items.append(
            BatchItem(
                query=HeadInput("mlp", token_ids=token_ids, H=rng.normal(0, 1, (4, d))),
                image=HeadInput("mlm", h0=h0 / np.linalg.norm(h0)),
            )
        )
    return params, items, EncoderConfig("M2"), TrainingConfig(seed=0)


def test_finite_diff_linear_region_tight():
    params, items, config, tcfg = linear_region_instance()
    assert finite_diff_check(params, items, config, tcfg, 10) < 1e-6


def test_finite_diff_acceptance_shape_instance():
    params, items, config, tcfg = random_check_instance(17)
    err = finite_diff_check(params, items, config, tcfg, 32, epsilon=1e-5)
    assert err < 1e-4


def test_finite_diff_rejects_bad_epsilon():
    params, items, config, tcfg = random_check_instance(2)
    with pytest.raises(ContractError):
        finite_diff_check(params, items, config, tcfg, 32, epsilon=0.01)


@pytest.mark.parametrize("variant,lam", [("M1", 0.0), ("M3", 0.0), ("M4", 0.0), ("M2", 0.5), ("M4", 0.25)])
def test_gradients_match_across_variants(variant, lam):
    tcfg = TrainingConfig(seed=23, flops_lambda=lam)
    params, items, config, tcfg = random_check_instance(
        23, config=EncoderConfig(variant), tcfg=tcfg
    )
    assert finite_diff_check(params, items, config, tcfg, 32) < 1e-4


def test_symmetric_scores_give_opposite_softmax_pulls():
    # When query q scores its positive and one negative equally, the two
    # documents' upstream coefficients are equal and opposite around the
    # softmax mean: G[q,pos] = (p - 1)/(B tau), G[q,neg] = p/(B tau).
    scores = np.array([[1.0, 1.0], [0.0, 0.0]])
    tau, B = 1.0, 2
    softmax = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
    G = (softmax - np.eye(B)) / (B * tau)
    assert G[0, 0] == pytest.approx(-G[0, 1], abs=1e-12)


def test_identical_documents_cancel_in_mlm_gradient():
    # Sharp consequence of the equal-and-opposite pulls through the real
    # backward path: if both batch documents are identical, every query
    # scores its positive and negative equally, the per-document upstreams
    # are exact negatives of each other, and the shared document states make
    # the accumulated dE/dbias cancel to zero.
    rng = np.random.default_rng(4)
    d, V = 6, 16
    params = ModelParams(
        mlp=MlpHeadParams(W=rng.normal(0, 1, d), b=1.0),
        mlm=MlmHeadParams(E=rng.normal(0, 1, (V, d)), bias=rng.normal(0, 0.3, V)),
    )
    h0 = rng.normal(0, 1, d)
    items = []
    for _ in range(2):
        token_ids = rng.integers(0, V, 3).astype(np.int64)
        items.append(
            BatchItem(
                query=HeadInput("mlp", token_ids=token_ids, H=rng.normal(0, 1, (3, d))),
                image=HeadInput("mlm", h0=h0.copy()),
            )
        )
    fwd, grads = backward(items, params, EncoderConfig("M2"), TrainingConfig(seed=0), V)
    # Indistinguishable candidates pin the loss at ln(B): nothing any
    # parameter does can change it, so every gradient cancels exactly.
    assert fwd.infonce == pytest.approx(math.log(2.0), abs=1e-12)
    assert np.allclose(grads.dE, 0.0, atol=1e-15)
    assert np.allclose(grads.dbias, 0.0, atol=1e-15)
    assert np.allclose(grads.dW, 0.0, atol=1e-15) and abs(grads.db) <= 1e-15
    # Breaking the symmetry restores a document-side gradient.
    items[1].image.h0 = items[1].image.h0 + 0.05
    _, grads = backward(items, params, EncoderConfig("M2"), TrainingConfig(seed=0), V)
    assert not np.allclose(grads.dE, 0.0)


# -- train loop -------------------------------------------------------------------


def small_task():
    from lsrkit.synthetic import separable_corpus

    return separable_corpus(n_pairs=24, n_classes=8, dimension=8, seed=3)


def small_providers(task):
    from lsrkit.embeddings import ToyEmbeddingProvider
    from lsrkit.encoders import Providers

    return Providers(
        vocab=task.vocab,
        tokens=ToyEmbeddingProvider(8, 3),
        image_pooled=task.image_provider,
    )


def test_train_zero_learning_rate_is_identity():
    task = small_task()
    providers = small_providers(task)
    tcfg = TrainingConfig(epochs=2, batch_size=8, learning_rate=0.0, seed=1)
    cfg = EncoderConfig("M2")
    from lsrkit.encoders import init_params

    initial = init_params(cfg, task.vocab.size, 8, tcfg.seed)
    w0, e0 = initial.mlp.W.copy(), initial.mlm.E.copy()
    outcome = train(
        task.pairs, task.queries_by_id(), task.docs_by_id(), tcfg, cfg, providers, initial
    )
    assert np.array_equal(outcome.params.mlp.W, w0)
    assert outcome.params.mlp.b == initial.mlp.b
    assert np.array_equal(outcome.params.mlm.E, e0)


def test_train_single_pair_loss_identically_zero():
    task = small_task()
    providers = small_providers(task)
    tcfg = TrainingConfig(epochs=3, batch_size=1, learning_rate=0.1, seed=1)
    outcome = train(
        task.pairs[:1], task.queries_by_id(), task.docs_by_id(), tcfg, EncoderConfig("M2"), providers
    )
    assert len(outcome.log) == 3
    assert all(row.infonce == 0.0 for row in outcome.log)


def test_train_loss_decreases_on_separable_corpus():
    task = small_task()
    providers = small_providers(task)
    tcfg = TrainingConfig(epochs=5, batch_size=8, learning_rate=4.0, seed=3)
    outcome = train(
        task.pairs, task.queries_by_id(), task.docs_by_id(), tcfg, EncoderConfig("M2"), providers
    )
    assert outcome.epoch_mean_infonce(5) < outcome.epoch_mean_infonce(1)


def test_train_bit_identical_across_runs():
    task = small_task()
    providers = small_providers(task)
    tcfg = TrainingConfig(epochs=2, batch_size=8, learning_rate=1.0, seed=11)
    args = (task.pairs, task.queries_by_id(), task.docs_by_id(), tcfg, EncoderConfig("M2"), providers)
    a = train(*args)
    b = train(*args)
    assert [(r.step, r.epoch, r.infonce, r.flops, r.total) for r in a.log] == [
        (r.step, r.epoch, r.infonce, r.flops, r.total) for r in b.log
    ]
    assert a.params.mlp.W.tobytes() == b.params.mlp.W.tobytes()
    assert a.params.mlm.E.tobytes() == b.params.mlm.E.tobytes()
    assert a.params.mlm.bias.tobytes() == b.params.mlm.bias.tobytes()


def test_train_unresolvable_id_fails_before_first_step():
    task = small_task()
    providers = small_providers(task)
    pairs = task.pairs + [TrainingPair("ghost", task.pairs[0].doc_id)]
    with pytest.raises(DataError, match="ghost"):
        train(pairs, task.queries_by_id(), task.docs_by_id(), TrainingConfig(), EncoderConfig("M2"), providers)


def test_train_keeps_last_partial_batch():
    task = small_task()
    providers = small_providers(task)
    tcfg = TrainingConfig(epochs=1, batch_size=10, learning_rate=0.1, seed=0)
    outcome = train(
        task.pairs, task.queries_by_id(), task.docs_by_id(), tcfg, EncoderConfig("M2"), providers
    )
    # 24 pairs, batch 10 -> steps of size 10, 10, 4
    assert len(outcome.log) == 3


def test_training_config_validation_and_load(tmp_path):
    with pytest.raises(ContractError):
        TrainingConfig(epochs=0)
    with pytest.raises(ContractError):
        TrainingConfig(temperature=0.0)
    with pytest.raises(ContractError):
        TrainingConfig(learning_rate=-1.0)
    path = tmp_path / "train.json"
    path.write_text('{"epochs": 2, "batch_size": 4, "learning_rate": 0.5, "seed": 9}\n')
    tcfg = TrainingConfig.load(path)
    assert tcfg == TrainingConfig(epochs=2, batch_size=4, learning_rate=0.5, seed=9)


# -- files ---------------------------------------------------------------------------


def test_pairs_roundtrip(tmp_path):
    pairs = [TrainingPair("q1", "d1"), TrainingPair("q2", "d9")]
    path = tmp_path / "pairs.tsv"
    save_pairs(path, pairs)
    assert path.read_text() == "q1\td1\nq2\td9\n"
    assert load_pairs(path) == pairs


def test_loss_log_format(tmp_path):
    from lsrkit.training import LossLogRow

    path = tmp_path / "loss.csv"
    write_loss_log(path, [LossLogRow(1, 1, 0.5, 0.0, 0.5)])
    lines = path.read_text().splitlines()
    assert lines[0] == "step,epoch,infonce,flops,total"
    assert lines[1] == "1,1,0.5,0.0,0.5"


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    params = ModelParams(
        mlp=MlpHeadParams(W=rng.normal(0, 1, 4), b=0.25),
        mlm=MlmHeadParams(E=rng.normal(0, 1, (6, 4)), bias=rng.normal(0, 1, 6)),
    )
    save_checkpoint(tmp_path / "ckpt", params, epoch=5, seed=7)
    back, manifest = load_checkpoint(tmp_path / "ckpt")
    assert manifest == {"epoch": 5, "seed": 7}
    assert back.mlp.W.tobytes() == params.mlp.W.tobytes()
    assert back.mlm.E.tobytes() == params.mlm.E.tobytes()


def test_training_config_rejects_negative_seed():
    with pytest.raises(ContractError):
        TrainingConfig(seed=-5)
