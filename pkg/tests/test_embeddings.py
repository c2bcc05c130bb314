import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsrkit.core import TokenSequence
from lsrkit.embeddings import (
    FileEmbeddingProvider,
    ToyEmbeddingProvider,
    write_embedding_file,
)
from lsrkit.errors import ContractError, DataError, MissingRecordError, ParseError


def toks(*ids):
    return TokenSequence(tuple(ids))


def test_embed_tokens_empty():
    provider = ToyEmbeddingProvider(dimension=4, seed=7)
    assert provider.embed_tokens(toks()) == []


def test_same_token_same_embedding():
    provider = ToyEmbeddingProvider(dimension=8, seed=1)
    a, b = provider.embed_tokens(toks(3, 3))
    assert np.array_equal(a, b)


def test_toy_recipe_reproducible():
    # The documented recipe: default_rng(SeedSequence([seed, token_id]))
    # .standard_normal(d), scaled to unit length.
    provider = ToyEmbeddingProvider(dimension=4, seed=7)
    (got,) = provider.embed_tokens(toks(3))
    rng = np.random.default_rng(np.random.SeedSequence([7, 3]))
    expected = rng.standard_normal(4)
    expected /= np.linalg.norm(expected)
    assert np.array_equal(got, expected)


@given(st.integers(0, 2**31), st.integers(0, 10_000), st.integers(1, 64))
def test_toy_embeddings_unit_norm_and_deterministic(seed, token_id, dim):
    a = ToyEmbeddingProvider(dim, seed).embed_tokens(toks(token_id))[0]
    b = ToyEmbeddingProvider(dim, seed).embed_tokens(toks(token_id))[0]
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-9


def test_toy_pooled_single_token_is_identity():
    provider = ToyEmbeddingProvider(dimension=16, seed=3)
    (single,) = provider.embed_tokens(toks(5))
    pooled = provider.embed_pooled("item", toks(5))
    assert np.allclose(pooled, single, atol=1e-15)


def test_toy_pooled_mean_then_renormalize():
    provider = ToyEmbeddingProvider(dimension=8, seed=11)
    u, w = provider.embed_tokens(toks(0, 1))
    pooled = provider.embed_pooled(None, toks(0, 1))
    mean = (u + w) / 2.0
    assert np.array_equal(pooled, mean / np.linalg.norm(mean))
    assert abs(np.linalg.norm(pooled) - 1.0) <= 1e-9


def test_toy_pooled_orthogonal_hand_case():
    # Two exactly orthogonal unit vectors: pooled = (u + w) / ||u + w||.
    provider = ToyEmbeddingProvider(dimension=4, seed=0)
    u, w = provider.embed_tokens(toks(1, 2))
    w = w - (w @ u) * u
    w /= np.linalg.norm(w)
    mean = (u + w) / 2.0
    expected = (u + w) / np.linalg.norm(u + w)
    assert np.allclose(mean / np.linalg.norm(mean), expected, atol=1e-12)


def test_toy_pooled_empty_tokens_error():
    provider = ToyEmbeddingProvider(dimension=4, seed=0)
    with pytest.raises(ContractError):
        provider.embed_pooled("item", toks())
    with pytest.raises(ContractError):
        provider.embed_pooled("item", None)


def test_toy_rejects_bad_dimension():
    with pytest.raises(ContractError):
        ToyEmbeddingProvider(dimension=0, seed=0)


# -- file-backed ---------------------------------------------------------------


def write_file(path, dim, records, extra=None):
    write_embedding_file(path, dim, records, header_extra=extra)


def test_file_provider_roundtrip(tmp_path):
    path = tmp_path / "emb.jsonl"
    vec = [0.25, -1.5, 3.0]
    write_file(path, 3, [("item1", vec)])
    provider = FileEmbeddingProvider.load(path)
    assert provider.dimension == 3
    assert np.array_equal(provider.embed_pooled("item1", None), np.array(vec))


def test_file_provider_missing_id_names_it(tmp_path):
    path = tmp_path / "emb.jsonl"
    write_file(path, 2, [("present", [1.0, 2.0])])
    provider = FileEmbeddingProvider.load(path)
    with pytest.raises(MissingRecordError, match="absent"):
        provider.embed_pooled("absent", None)


def test_file_provider_token_lookup(tmp_path):
    path = tmp_path / "tok.jsonl"
    write_file(path, 2, [("0", [1.0, 0.0]), ("3", [0.0, 1.0])])
    provider = FileEmbeddingProvider.load(path)
    got = provider.embed_tokens(toks(3, 0))
    assert np.array_equal(got[0], [0.0, 1.0])
    assert np.array_equal(got[1], [1.0, 0.0])
    with pytest.raises(MissingRecordError, match="'7'"):
        provider.embed_tokens(toks(7))


def test_file_provider_rejects_wrong_dimension(tmp_path):
    path = tmp_path / "emb.jsonl"
    write_file(path, 3, [("a", [1.0, 2.0])])  # record shorter than header dim
    with pytest.raises(DataError):
        FileEmbeddingProvider.load(path)


def test_file_provider_rejects_duplicates_and_bad_header(tmp_path):
    path = tmp_path / "emb.jsonl"
    write_file(path, 1, [("a", [1.0]), ("a", [2.0])])
    with pytest.raises(DataError):
        FileEmbeddingProvider.load(path)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "values": [1.0]}\n')
    with pytest.raises(ParseError):
        FileEmbeddingProvider.load(bad)


def test_file_provider_ignores_extra_header_keys(tmp_path):
    path = tmp_path / "emb.jsonl"
    write_file(path, 1, [("a", [2.0])], extra={"pooling": "mean", "model": "x"})
    provider = FileEmbeddingProvider.load(path)
    assert provider.dimension == 1
    assert provider.ids() == {"a"}


def test_file_provider_preserves_exact_values(tmp_path):
    path = tmp_path / "emb.jsonl"
    values = [0.1, 1e-300, 123456.789012345]
    write_file(path, 3, [("a", values)])
    got = FileEmbeddingProvider.load(path).get("a")
    assert got.tobytes() == np.array(values).tobytes()


def test_toy_rejects_negative_seed():
    with pytest.raises(ContractError):
        ToyEmbeddingProvider(dimension=4, seed=-1)
