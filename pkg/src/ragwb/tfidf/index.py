"""TF-IDF index: build, vectorize, score, and persist.

Weights use raw term counts scaled by a smoothed idf,
``ln((1 + N) / (1 + df)) + 1``, and every document row is L2-normalized,
so ranking reduces to a dot product against the normalized query vector.
The vocabulary is sorted by code point, which fixes the column order
independently of document order.

On disk an index is two files in one directory: ``index.npy`` holds the
dense document-by-term matrix (see :mod:`.npyio`) and ``index.meta.json``
maps the axes back to terms and document URIs.
"""

from __future__ import annotations

import json
import math
import re
from array import array
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import UserInputError
from . import kernels
from .npyio import npy_read, npy_write

# word characters minus underscore; covers accented letters
_TOKEN_RE = re.compile(r"[^\W_]+")

_META_KEYS = {"terms", "df", "n_docs", "uris"}

SparseRow = list[tuple[int, float]]


class TfidfError(UserInputError):
    """Invalid index build, query, or index files that do not line up."""


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Lowercase and split into unicode word tokens, dropping stopwords."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def _idf(n_docs: int, df: int) -> float:
    return math.log((1 + n_docs) / (1 + df)) + 1.0


class TfidfIndex:
    """In-memory index over N documents and a fixed vocabulary.

    ``rows[i]`` is document i's normalized vector as sorted
    ``(column, weight)`` pairs; posting arrays for the scan kernel are
    built lazily on first scoring call.
    """

    def __init__(
        self,
        terms: list[str],
        df: list[int],
        uris: list[str],
        rows: list[SparseRow],
    ) -> None:
        if len(terms) != len(df):
            raise TfidfError(f"{len(terms)} terms but {len(df)} df entries")
        if len(uris) != len(rows):
            raise TfidfError(f"{len(uris)} uris but {len(rows)} matrix rows")
        self.terms = terms
        self.df = df
        self.uris = uris
        self.rows = rows
        self.n_docs = len(uris)
        self.idf = [_idf(self.n_docs, d) for d in df]
        self._col_of = {t: i for i, t in enumerate(terms)}
        self._postings: tuple[array, array, array] | None = None

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def column_of(self, term: str) -> int | None:
        return self._col_of.get(term)

    def dense_rows(self) -> list[list[float]]:
        """Materialize the full document-by-term matrix."""
        out = []
        for row in self.rows:
            dense = [0.0] * self.n_terms
            for col, weight in row:
                dense[col] = weight
            out.append(dense)
        return out

    def postings(self) -> tuple[array, array, array]:
        """Column-sliced posting arrays (indptr, doc rows, weights)."""
        if self._postings is None:
            counts = [0] * self.n_terms
            for row in self.rows:
                for col, _ in row:
                    counts[col] += 1
            indptr = array("q", [0] * (self.n_terms + 1))
            for col in range(self.n_terms):
                indptr[col + 1] = indptr[col] + counts[col]
            total = indptr[self.n_terms]
            doc_ids = array("i", bytes(4 * total))
            weights = array("d", bytes(8 * total))
            cursor = list(indptr[: self.n_terms])
            for doc_id, row in enumerate(self.rows):
                for col, weight in row:
                    k = cursor[col]
                    doc_ids[k] = doc_id
                    weights[k] = weight
                    cursor[col] = k + 1
            self._postings = (indptr, doc_ids, weights)
        return self._postings


def build_index(
    docs: Mapping[str, str] | Iterable[tuple[str, str]],
    stopwords: frozenset[str] | None = None,
) -> TfidfIndex:
    """Tokenize documents and build the normalized TF-IDF matrix.

    Document order fixes the row order. Fails on zero documents,
    duplicate URIs, and a corpus with no tokens at all; a single
    tokenless document just gets an all-zero row.
    """
    if isinstance(docs, Mapping):
        items = list(docs.items())
    else:
        items = list(docs)
    if not items:
        raise TfidfError("cannot build an index over zero documents")

    uris: list[str] = []
    token_lists: list[list[str]] = []
    seen = set()
    for uri, text in items:
        if uri in seen:
            raise TfidfError(f"duplicate uri: {uri!r}")
        seen.add(uri)
        uris.append(uri)
        token_lists.append(tokenize(text, stopwords))

    df_counter: Counter[str] = Counter()
    for tokens in token_lists:
        df_counter.update(set(tokens))
    if not df_counter:
        raise TfidfError("no tokens in any document, vocabulary is empty")

    terms = sorted(df_counter)
    df = [df_counter[t] for t in terms]
    col_of = {t: i for i, t in enumerate(terms)}
    n_docs = len(uris)
    idf = [_idf(n_docs, d) for d in df]

    rows: list[SparseRow] = []
    for tokens in token_lists:
        counts = Counter(tokens)
        row = [(col_of[t], tf * idf[col_of[t]]) for t, tf in counts.items()]
        row.sort()
        norm = math.sqrt(math.fsum(w * w for _, w in row))
        if norm > 0.0:
            row = [(col, w / norm) for col, w in row]
        rows.append(row)

    return TfidfIndex(terms=terms, df=df, uris=uris, rows=rows)


def vectorize_query(index: TfidfIndex, text: str) -> SparseRow:
    """Normalized query vector in index coordinates.

    Terms outside the vocabulary are dropped; a query with no known
    terms becomes the zero vector (an empty list).
    """
    counts = Counter(tokenize(text))
    row: SparseRow = []
    for term, tf in counts.items():
        col = index.column_of(term)
        if col is not None:
            row.append((col, tf * index.idf[col]))
    row.sort()
    norm = math.sqrt(math.fsum(w * w for _, w in row))
    if norm > 0.0:
        row = [(col, w / norm) for col, w in row]
    return row


def cosine_scores(index: TfidfIndex, query_vector: SparseRow) -> list[float]:
    """Cosine similarity of the query against every document row."""
    for col, _ in query_vector:
        if not 0 <= col < index.n_terms:
            raise TfidfError(
                f"query column {col} out of range for {index.n_terms} terms"
            )
    out = array("d", bytes(8 * index.n_docs))
    if query_vector:
        indptr, doc_ids, weights = index.postings()
        q_cols = array("q", [col for col, _ in query_vector])
        q_weights = array("d", [w for _, w in query_vector])
        kernels.scan(indptr, doc_ids, weights, q_cols, q_weights, out)
    return list(out)


# --- persistence -----------------------------------------------------------

def save_index(index: TfidfIndex, out_dir: str | Path) -> dict[str, Path]:
    """Write ``index.npy`` and its ``index.meta.json`` sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    npy_path = out / "index.npy"
    meta_path = out / "index.meta.json"
    npy_path.write_bytes(npy_write(index.dense_rows(), cols=index.n_terms))
    meta = {
        "terms": index.terms,
        "df": index.df,
        "n_docs": index.n_docs,
        "uris": index.uris,
    }
    meta_path.write_text(
        json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return {"matrix": npy_path, "meta": meta_path}


def _load_meta(meta_path: Path) -> dict:
    try:
        raw = meta_path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TfidfError(f"missing index sidecar: {meta_path}") from None
    try:
        meta = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TfidfError(f"malformed index sidecar {meta_path}: {exc.msg}") from exc
    if not isinstance(meta, dict) or set(meta) != _META_KEYS:
        raise TfidfError(
            f"index sidecar {meta_path} must have exactly the keys "
            f"{sorted(_META_KEYS)}"
        )
    if (
        not isinstance(meta["terms"], list)
        or not all(isinstance(t, str) for t in meta["terms"])
        or not isinstance(meta["df"], list)
        or not all(isinstance(d, int) and not isinstance(d, bool) for d in meta["df"])
        or not isinstance(meta["uris"], list)
        or not all(isinstance(u, str) for u in meta["uris"])
        or not isinstance(meta["n_docs"], int)
        or isinstance(meta["n_docs"], bool)
    ):
        raise TfidfError(f"index sidecar {meta_path} has fields of the wrong type")
    return meta


def load_index(in_dir: str | Path) -> TfidfIndex:
    """Load an index directory, checking matrix and sidecar agree."""
    src = Path(in_dir)
    meta = _load_meta(src / "index.meta.json")
    npy_path = src / "index.npy"
    try:
        blob = npy_path.read_bytes()
    except FileNotFoundError:
        raise TfidfError(f"missing index matrix: {npy_path}") from None
    (n_rows, n_cols), values = npy_read(blob)

    if len(meta["terms"]) != len(meta["df"]):
        raise TfidfError("sidecar terms and df lengths differ")
    if meta["n_docs"] != len(meta["uris"]):
        raise TfidfError(
            f"sidecar declares {meta['n_docs']} docs but lists "
            f"{len(meta['uris'])} uris"
        )
    if n_rows != meta["n_docs"]:
        raise TfidfError(
            f"matrix has {n_rows} rows but sidecar declares {meta['n_docs']} docs"
        )
    if n_cols != len(meta["terms"]):
        raise TfidfError(
            f"matrix has {n_cols} columns but sidecar lists "
            f"{len(meta['terms'])} terms"
        )

    rows: list[SparseRow] = []
    for i in range(n_rows):
        base = i * n_cols
        rows.append(
            [
                (j, values[base + j])
                for j in range(n_cols)
                if values[base + j] != 0.0
            ]
        )
    return TfidfIndex(terms=meta["terms"], df=meta["df"], uris=meta["uris"], rows=rows)


def search(
    index: TfidfIndex, query: str
) -> list[tuple[int, float]]:
    """Score a text query; returns (row, score) sorted best-first.

    Ties break toward the lower row so results are deterministic.
    """
    scores = cosine_scores(index, vectorize_query(index, query))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [(i, scores[i]) for i in order]
