import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lsrkit.core import SparseVector, Vocabulary
from lsrkit.diagnostics import (
    coactivation_report,
    load_stoplist,
    stopword_mass,
    top_terms,
    write_top_terms_tsv,
)


def sv(*pairs):
    return SparseVector.from_pairs(pairs)


def figure2_dense_vectors():
    return [sv((0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)) for _ in range(4)]


def figure2_sparse_vectors():
    return [
        SparseVector.from_pairs([(4 * i + j, 1.0) for j in range(4)]) for i in range(4)
    ]


def test_coactivation_dense_case():
    report = coactivation_report(figure2_dense_vectors(), vocab_size=16)
    assert report.density == pytest.approx(1.0)
    assert report.expected_postings_per_active_term == pytest.approx(4.0)
    assert report.active_terms == 4
    assert report.active_dims_per_doc_mean == 4.0
    assert report.document_frequency == {0: 4, 1: 4, 2: 4, 3: 4}


def test_coactivation_sparse_case():
    report = coactivation_report(figure2_sparse_vectors(), vocab_size=16)
    assert report.density == pytest.approx(0.25)
    assert report.expected_postings_per_active_term == pytest.approx(1.0)
    assert report.active_terms == 16


def test_coactivation_empty():
    report = coactivation_report([], vocab_size=8)
    assert report.doc_count == 0
    assert report.density == 0.0
    assert report.expected_postings_per_active_term == 0.0
    assert report.document_frequency == {}


@given(st.integers(0, 10**6))
def test_coactivation_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    vecs = []
    for _ in range(6):
        ids = np.sort(rng.choice(12, size=int(rng.integers(0, 6)), replace=False))
        vecs.append(SparseVector(ids.astype(np.int64), rng.uniform(0.1, 1, ids.size)))
    perm = [vecs[i] for i in rng.permutation(len(vecs))]
    a = coactivation_report(vecs, 12)
    b = coactivation_report(perm, 12)
    assert a.density == b.density
    assert a.document_frequency == b.document_frequency
    assert a.active_dims_per_doc_mean == b.active_dims_per_doc_mean


def test_density_bounds():
    report = coactivation_report(figure2_sparse_vectors(), vocab_size=16)
    assert 0.0 < report.density <= 1.0


# -- top terms ---------------------------------------------------------------------


def test_top_terms_ordering():
    vocab = Vocabulary(["the", "bike", "mountain", "path"])
    vec = sv((1, 9.0), (2, 10.0))
    assert top_terms(vec, vocab, 2) == [("mountain", 10.0), ("bike", 9.0)]


def test_top_terms_empty_and_short():
    vocab = Vocabulary(["a", "b"])
    assert top_terms(SparseVector(), vocab, 3) == []
    assert top_terms(sv((0, 1.0)), vocab, 5) == [("a", 1.0)]


def test_top_terms_tie_by_term_id():
    vocab = Vocabulary(["t0", "t1", "t2"])
    vec = sv((0, 2.0), (1, 5.0), (2, 5.0))
    assert top_terms(vec, vocab, 2) == [("t1", 5.0), ("t2", 5.0)]


def test_top_terms_tsv(tmp_path):
    vocab = Vocabulary(["x", "y"])
    path = tmp_path / "top.tsv"
    write_top_terms_tsv(path, [("doc1", sv((0, 1.5), (1, 3.0)))], vocab, k=2)
    assert path.read_text() == "doc1\t1\ty\t3.0\ndoc1\t2\tx\t1.5\n"


# -- stopword mass ---------------------------------------------------------------


def test_stopword_mass_cases():
    vocab = Vocabulary(["the", "bike", "mountain"])
    stop = {"the"}
    assert stopword_mass(sv((1, 2.0), (2, 2.0)), vocab, stop) == 0.0
    assert stopword_mass(sv((0, 2.0)), vocab, stop) == 1.0
    assert stopword_mass(sv((0, 1.0), (1, 3.0)), vocab, stop) == pytest.approx(0.25)
    assert stopword_mass(SparseVector(), vocab, stop) == 0.0


def test_load_stoplist(tmp_path):
    path = tmp_path / "stop.txt"
    path.write_text("the\n\nof \n")
    assert load_stoplist(path) == {"the", "of"}
