"""Compare the compiled posting-scan kernel against the pure-Python one.

Builds a synthetic index, runs the same query batch through both scan
implementations, and prints per-query timings plus the speedup. The
compiled row is skipped when the extension is not built.

Usage: python benchmarks/bench_kernels.py [--docs 2000] [--terms 2000]
       [--queries 50] [--seed 42]
"""

from __future__ import annotations

import argparse
import statistics
import time
from array import array

from ragwb.prng import Xorshift64Star
from ragwb.tfidf import build_index, vectorize_query
from ragwb.tfidf import _scan_py

try:
    from ragwb.tfidf import _scan  # type: ignore[attr-defined]
except ImportError:
    _scan = None


def synthetic_docs(n_docs: int, n_terms: int, seed: int) -> list[tuple[str, str]]:
    rng = Xorshift64Star(seed)
    docs = []
    for i in range(n_docs):
        length = 20 + rng.below(60)
        words = [f"t{rng.below(n_terms)}" for _ in range(length)]
        docs.append((f"doc{i}", " ".join(words)))
    return docs


def time_kernel(scan, index, queries, repeat: int = 3) -> list[float]:
    indptr, doc_ids, weights = index.postings()
    prepared = []
    for qv in queries:
        prepared.append(
            (
                array("q", [c for c, _ in qv]),
                array("d", [w for _, w in qv]),
            )
        )
    timings = []
    for q_cols, q_weights in prepared:
        best = float("inf")
        for _ in range(repeat):
            out = array("d", bytes(8 * index.n_docs))
            started = time.perf_counter()
            scan(indptr, doc_ids, weights, q_cols, q_weights, out)
            best = min(best, time.perf_counter() - started)
        timings.append(best * 1000.0)
    return timings


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=2000)
    parser.add_argument("--terms", type=int, default=2000)
    parser.add_argument("--queries", type=int, default=50)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    print(f"building index: {args.docs} docs, ~{args.terms} terms ...")
    index = build_index(synthetic_docs(args.docs, args.terms, args.seed))
    rng = Xorshift64Star(args.seed + 1)
    queries = []
    while len(queries) < args.queries:
        words = [f"t{rng.below(args.terms)}" for _ in range(8)]
        qv = vectorize_query(index, " ".join(words))
        if qv:
            queries.append(qv)

    rows = [("python", _scan_py.scan)]
    if _scan is not None:
        rows.append(("compiled", _scan.scan))
    else:
        print("compiled kernel not built; showing pure Python only")

    results = {}
    for name, scan in rows:
        timings = time_kernel(scan, index, queries)
        results[name] = statistics.median(timings)
        print(
            f"{name:>8}: median {results[name]:8.3f} ms  "
            f"mean {statistics.fmean(timings):8.3f} ms  "
            f"max {max(timings):8.3f} ms  ({len(timings)} queries)"
        )
    if "compiled" in results and results["compiled"] > 0:
        print(f"speedup: {results['python'] / results['compiled']:.1f}x")


if __name__ == "__main__":
    main()
