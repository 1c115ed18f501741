"""Pure-Python posting-list scan, the fallback for the compiled kernel.

Must stay behaviorally identical to ``_scan.pyx``: both walk the same
column-sliced posting arrays and accumulate into the same output buffer.
"""

from __future__ import annotations


def scan(indptr, rows, weights, q_cols, q_weights, out) -> None:
    """Accumulate query-term contributions into per-document scores.

    ``indptr`` slices ``rows``/``weights`` by term column; for each query
    term the matching postings add ``q_weight * doc_weight`` to that
    document's slot in ``out``. With L2-normalized inputs the result is
    the cosine score.
    """
    for k in range(len(q_cols)):
        col = q_cols[k]
        q_weight = q_weights[k]
        for j in range(indptr[col], indptr[col + 1]):
            out[rows[j]] += q_weight * weights[j]
