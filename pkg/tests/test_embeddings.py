import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablescout.corpus import REAL_TOKEN, Question, Split
from tablescout.embeddings import (
    load_embeddings,
    lookup,
    question_signature,
    signature_matrix,
    sqrtn_combine,
)
from tablescout.errors import EmbeddingError


def _store(tmp_path, text, dim):
    p = tmp_path / "vecs.txt"
    p.write_text(text)
    return load_embeddings(p, dim)


class TestLoadEmbeddings:
    def test_basic_with_header(self, tmp_path):
        store = _store(tmp_path, "2 3\ncat 1 2 3\ndog 4 5 6\n", 3)
        assert store.dim == 3
        assert store.matrix.shape == (4, 3)  # 2 pretrained + UNK + REAL
        assert store.special_rows == {"UNK": 2, "REAL": 3}
        assert np.array_equal(store.matrix[2], np.zeros(3))
        assert np.array_equal(store.matrix[3], np.zeros(3))

    def test_basic_without_header(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        assert store.vocab == {"cat": 0}

    def test_dimension_mismatch(self, tmp_path):
        with pytest.raises(EmbeddingError, match="line 1"):
            _store(tmp_path, "cat 1.0 2.0\n", 3)

    def test_header_dim_mismatch(self, tmp_path):
        with pytest.raises(EmbeddingError, match="header"):
            _store(tmp_path, "1 5\ncat 1 2 3 4 5\n", 3)

    def test_bad_float(self, tmp_path):
        with pytest.raises(EmbeddingError, match="bad float"):
            _store(tmp_path, "cat 1 x 3\n", 3)

    def test_non_finite(self, tmp_path):
        with pytest.raises(EmbeddingError, match="non-finite"):
            _store(tmp_path, "cat 1 inf 3\n", 3)

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmbeddingError, match="no word vectors"):
            _store(tmp_path, "", 3)

    def test_duplicates_keep_first(self, tmp_path, caplog):
        with caplog.at_level("WARNING"):
            store = _store(tmp_path, "cat 1 2 3\ncat 9 9 9\n", 3)
        assert np.array_equal(store.matrix[store.vocab["cat"]], [1, 2, 3])
        assert "duplicate" in caplog.text


class TestLookup:
    def test_known_token_bit_exact(self, tmp_path):
        store = _store(tmp_path, "cat 0.25 -1.5 3\n", 3)
        assert np.array_equal(lookup(store, "cat"), np.array([0.25, -1.5, 3.0]))

    def test_real_token(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        assert np.array_equal(lookup(store, REAL_TOKEN), store.matrix[store.real_index])

    def test_unseen_token(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        assert np.array_equal(lookup(store, "zzzqq"), store.matrix[store.unk_index])

    def test_always_dim_length(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        for tok in ("cat", "dog", REAL_TOKEN, "", "?"):
            assert lookup(store, tok).shape == (3,)


class TestSqrtnCombine:
    def test_single_vector_identity(self):
        v = np.array([2.0, -3.0])
        assert np.allclose(sqrtn_combine([v]), v)

    def test_n_copies(self):
        v = np.array([1.0, 2.0])
        out = sqrtn_combine([v, v, v, v])
        assert np.allclose(out, 2.0 * v)  # n copies -> sqrt(n) * v

    def test_derived_value(self):
        out = sqrtn_combine([np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 0.0])])
        assert np.allclose(out, np.array([2.0, 1.0]) / math.sqrt(3.0))

    def test_empty_input(self):
        with pytest.raises(EmbeddingError, match="empty"):
            sqrtn_combine([])

    def test_all_zero_weights(self):
        with pytest.raises(EmbeddingError, match="all-zero"):
            sqrtn_combine([np.ones(2)], weights=[0.0])

    def test_length_mismatch(self):
        with pytest.raises(EmbeddingError):
            sqrtn_combine([np.ones(2)], weights=[1.0, 1.0])

    @given(st.lists(st.integers(0, 4), min_size=2, max_size=6, unique=True))
    @settings(max_examples=50)
    def test_permutation_invariant(self, order):
        rng = np.random.default_rng(0)
        vecs = [rng.normal(size=3) for _ in range(5)]
        ws = [0.5, 1.0, 2.0, 1.5, 0.25]
        base = sqrtn_combine([vecs[i] for i in order], [ws[i] for i in order])
        rev = sqrtn_combine([vecs[i] for i in reversed(order)], [ws[i] for i in reversed(order)])
        assert np.allclose(base, rev)

    @given(st.floats(-8, 8).filter(lambda a: abs(a) > 1e-3))
    @settings(max_examples=50)
    def test_homogeneous_in_vectors(self, alpha):
        rng = np.random.default_rng(1)
        vecs = [rng.normal(size=4) for _ in range(3)]
        scaled = sqrtn_combine([alpha * v for v in vecs])
        assert np.allclose(scaled, alpha * sqrtn_combine(vecs))


class TestQuestionSignature:
    def _q(self, tokens):
        return Question("q", " ".join(tokens), list(tokens), "t", Split.TRAIN)

    def test_single_token(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        assert np.allclose(question_signature(store, self._q(["cat"])), [1, 2, 3])

    def test_repeated_token_scales_sqrt2(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        sig = question_signature(store, self._q(["cat", "cat"]))
        assert np.allclose(sig, math.sqrt(2.0) * np.array([1.0, 2.0, 3.0]))

    def test_all_oov_is_zero(self, tmp_path):
        # UNK row is zero at load time, so sqrt(k) * 0 = 0
        store = _store(tmp_path, "cat 1 2 3\n", 3)
        sig = question_signature(store, self._q(["zz", "qq", "xx"]))
        assert np.array_equal(sig, np.zeros(3))

    def test_matrix_alignment(self, tmp_path):
        store = _store(tmp_path, "cat 1 2 3\ndog 4 5 6\n", 3)
        qs = [self._q(["cat"]), self._q(["dog"])]
        mat = signature_matrix(store, qs)
        assert mat.shape == (2, 3)
        assert np.allclose(mat[0], [1, 2, 3])
        assert np.allclose(mat[1], [4, 5, 6])
