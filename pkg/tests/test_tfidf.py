"""Tokenizer, index math, kernel parity, and index persistence."""

import json
import math
from array import array

import pytest

from ragwb.prng import Xorshift64Star
from ragwb.tfidf import (
    TfidfError,
    build_index,
    cosine_scores,
    load_index,
    save_index,
    tokenize,
    vectorize_query,
)
from ragwb.tfidf import _scan_py
from ragwb.tfidf.index import search


class TestTokenize:
    def test_lowercases(self):
        assert tokenize("El Perro") == ["el", "perro"]

    def test_accents_kept(self):
        assert tokenize("Ingeniería química") == ["ingeniería", "química"]

    def test_underscore_and_punctuation_split(self):
        assert tokenize("a_b c-d e.f") == ["a", "b", "c", "d", "e", "f"]

    def test_digits_are_tokens(self):
        assert tokenize("año 2014") == ["año", "2014"]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("  .,;  ") == []

    def test_stopwords_filtered(self):
        assert tokenize("el perro y el gato", frozenset({"el", "y"})) == [
            "perro",
            "gato",
        ]


class TestBuildIndex:
    def test_vocabulary_sorted_by_code_point(self):
        index = build_index({"u": "zeta alfa ñu beta"})
        assert index.terms == sorted(index.terms)
        assert index.terms == ["alfa", "beta", "zeta", "ñu"]  # ñ sorts after z

    def test_df_counts_documents_not_occurrences(self):
        index = build_index({"a": "uno uno uno", "b": "uno dos"})
        assert index.df[index.column_of("uno")] == 2
        assert index.df[index.column_of("dos")] == 1

    def test_idf_formula(self):
        index = build_index({"a": "x y", "b": "x"})
        n = 2
        expected_x = math.log((1 + n) / (1 + 2)) + 1
        expected_y = math.log((1 + n) / (1 + 1)) + 1
        assert index.idf[index.column_of("x")] == pytest.approx(expected_x, abs=1e-15)
        assert index.idf[index.column_of("y")] == pytest.approx(expected_y, abs=1e-15)

    def test_rows_are_normalized(self):
        index = build_index({"a": "x x y z", "b": "y y y"})
        for row in index.rows:
            norm = math.fsum(w * w for _, w in row)
            assert norm == pytest.approx(1.0, abs=1e-12)

    def test_rows_sorted_by_column(self):
        index = build_index({"a": "zeta alfa beta zeta"})
        cols = [c for c, _ in index.rows[0]]
        assert cols == sorted(cols)

    def test_empty_doc_gets_zero_row(self):
        index = build_index({"a": "algo", "b": ""})
        assert index.rows[1] == []

    def test_errors(self):
        with pytest.raises(TfidfError, match="zero documents"):
            build_index({})
        with pytest.raises(TfidfError, match="vocabulary is empty"):
            build_index({"a": "", "b": "  ,. "})
        with pytest.raises(TfidfError, match="duplicate uri"):
            build_index([("a", "x"), ("a", "y")])

    def test_document_order_fixes_rows(self):
        index = build_index([("b", "dos"), ("a", "uno")])
        assert index.uris == ["b", "a"]


class TestQueryScoring:
    def test_self_query_scores_one(self):
        docs = {"a": "perro come arroz", "b": "gato duerme siesta", "c": "arroz con pollo"}
        index = build_index(docs)
        for row, uri in enumerate(index.uris):
            scores = cosine_scores(index, vectorize_query(index, docs[uri]))
            assert scores[row] == pytest.approx(1.0, abs=1e-9)

    def test_oov_query_is_zero_vector(self):
        index = build_index({"a": "uno dos"})
        assert vectorize_query(index, "tres cuatro") == []
        assert cosine_scores(index, []) == [0.0]

    def test_scores_bounded_by_one(self):
        index = build_index({"a": "x y z", "b": "x x", "c": "y"})
        scores = cosine_scores(index, vectorize_query(index, "x y"))
        assert all(-1e-9 <= s <= 1.0 + 1e-9 for s in scores)

    def test_no_shared_terms_scores_zero(self):
        index = build_index({"a": "uno", "b": "dos"})
        scores = cosine_scores(index, vectorize_query(index, "dos"))
        assert scores[0] == 0.0
        assert scores[1] == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        index = build_index({"a": "uno dos"})
        with pytest.raises(TfidfError, match="out of range"):
            cosine_scores(index, [(99, 1.0)])

    def test_matches_dense_oracle(self):
        np = pytest.importorskip("numpy")
        rng = Xorshift64Star(99)
        for _ in range(10):
            n_docs = 2 + rng.below(30)
            pool = [f"w{k}" for k in range(5 + rng.below(40))]
            docs = {}
            for i in range(n_docs):
                words = [pool[rng.below(len(pool))] for _ in range(rng.below(30))]
                docs[f"d{i:03d}"] = " ".join(words)
            if not any(docs.values()):
                continue
            index = build_index(docs)
            dense = np.array(index.dense_rows())
            for _ in range(3):
                q_words = [pool[rng.below(len(pool))] for _ in range(1 + rng.below(5))]
                qv = vectorize_query(index, " ".join(q_words))
                q_dense = np.zeros(index.n_terms)
                for col, w in qv:
                    q_dense[col] = w
                expected = dense @ q_dense
                got = cosine_scores(index, qv)
                assert np.max(np.abs(np.array(got) - expected)) < 1e-12

    def test_search_ranks_and_breaks_ties_by_row(self):
        index = build_index([("a", "mismo texto"), ("b", "mismo texto"), ("c", "otro")])
        results = search(index, "mismo texto")
        assert [index.uris[row] for row, _ in results[:2]] == ["a", "b"]
        assert results[0][1] == pytest.approx(results[1][1], abs=0)


class TestKernelParity:
    """The compiled and pure-Python scans must agree bit for bit."""

    def test_same_outputs(self):
        from ragwb.tfidf import kernels

        rng = Xorshift64Star(17)
        docs = {
            f"d{i}": " ".join(f"w{rng.below(50)}" for _ in range(rng.below(40)))
            for i in range(40)
        }
        index = build_index(docs)
        indptr, doc_ids, weights = index.postings()
        for _ in range(20):
            qv = vectorize_query(
                index, " ".join(f"w{rng.below(60)}" for _ in range(4))
            )
            q_cols = array("q", [c for c, _ in qv])
            q_weights = array("d", [w for _, w in qv])
            out_a = array("d", bytes(8 * index.n_docs))
            out_b = array("d", bytes(8 * index.n_docs))
            kernels.scan(indptr, doc_ids, weights, q_cols, q_weights, out_a)
            _scan_py.scan(indptr, doc_ids, weights, q_cols, q_weights, out_b)
            assert out_a.tobytes() == out_b.tobytes()

    def test_kernel_name_reports(self):
        from ragwb.tfidf.kernels import kernel_name

        assert kernel_name() in ("compiled", "python")


class TestPersistence:
    def test_round_trip(self, tmp_path):
        docs = {"a": "uno dos tres", "b": "dos dos", "c": ""}
        index = build_index(docs)
        save_index(index, tmp_path)
        assert (tmp_path / "index.npy").exists()
        assert (tmp_path / "index.meta.json").exists()

        loaded = load_index(tmp_path)
        assert loaded.terms == index.terms
        assert loaded.df == index.df
        assert loaded.uris == index.uris
        assert loaded.n_docs == index.n_docs
        assert loaded.rows == index.rows

        qv = vectorize_query(index, "dos tres")
        assert cosine_scores(loaded, qv) == cosine_scores(index, qv)

    def test_sidecar_schema(self, tmp_path):
        index = build_index({"a": "uno"})
        save_index(index, tmp_path)
        meta = json.loads((tmp_path / "index.meta.json").read_text())
        assert set(meta) == {"terms", "df", "n_docs", "uris"}
        assert meta["n_docs"] == 1

    def test_missing_files(self, tmp_path):
        with pytest.raises(TfidfError, match="sidecar"):
            load_index(tmp_path)
        index = build_index({"a": "uno"})
        save_index(index, tmp_path)
        (tmp_path / "index.npy").unlink()
        with pytest.raises(TfidfError, match="matrix"):
            load_index(tmp_path)

    def test_shape_mismatch_detected(self, tmp_path):
        index = build_index({"a": "uno dos", "b": "dos"})
        save_index(index, tmp_path)
        meta_path = tmp_path / "index.meta.json"
        meta = json.loads(meta_path.read_text())

        bad = dict(meta, n_docs=3, uris=meta["uris"] + ["ghost"])
        meta_path.write_text(json.dumps(bad))
        with pytest.raises(TfidfError, match="rows"):
            load_index(tmp_path)

        bad = dict(meta, terms=meta["terms"] + ["extra"], df=meta["df"] + [1])
        meta_path.write_text(json.dumps(bad))
        with pytest.raises(TfidfError, match="columns"):
            load_index(tmp_path)

    def test_sidecar_internal_consistency(self, tmp_path):
        index = build_index({"a": "uno dos", "b": "dos"})
        save_index(index, tmp_path)
        meta_path = tmp_path / "index.meta.json"
        meta = json.loads(meta_path.read_text())

        bad = dict(meta, df=meta["df"] + [1])
        meta_path.write_text(json.dumps(bad))
        with pytest.raises(TfidfError, match="df"):
            load_index(tmp_path)

        bad = dict(meta, n_docs=5)
        meta_path.write_text(json.dumps(bad))
        with pytest.raises(TfidfError, match="uris"):
            load_index(tmp_path)

    def test_sidecar_key_set_enforced(self, tmp_path):
        index = build_index({"a": "uno"})
        save_index(index, tmp_path)
        meta_path = tmp_path / "index.meta.json"
        meta = json.loads(meta_path.read_text())
        meta["comment"] = "oops"
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(TfidfError, match="exactly the keys"):
            load_index(tmp_path)

    def test_sidecar_type_checks(self, tmp_path):
        index = build_index({"a": "uno"})
        save_index(index, tmp_path)
        meta_path = tmp_path / "index.meta.json"
        meta = json.loads(meta_path.read_text())
        meta["df"] = ["1"]
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(TfidfError, match="wrong type"):
            load_index(tmp_path)
