"""TF-IDF indexing: tokenizer, index build/query, and the NPY matrix codec."""

from .index import (
    TfidfError,
    TfidfIndex,
    build_index,
    cosine_scores,
    load_index,
    save_index,
    tokenize,
    vectorize_query,
)
from .npyio import (
    NpyDtypeError,
    NpyError,
    NpyHeaderError,
    NpyMagicError,
    NpyOrderError,
    NpyTrailingDataError,
    NpyTruncatedError,
    NpyValueError,
    NpyVersionError,
    npy_read,
    npy_write,
    read_npy_file,
    write_npy_file,
)

__all__ = [
    "TfidfError",
    "TfidfIndex",
    "build_index",
    "cosine_scores",
    "load_index",
    "save_index",
    "tokenize",
    "vectorize_query",
    "NpyError",
    "NpyMagicError",
    "NpyVersionError",
    "NpyHeaderError",
    "NpyDtypeError",
    "NpyOrderError",
    "NpyTruncatedError",
    "NpyTrailingDataError",
    "NpyValueError",
    "npy_read",
    "npy_write",
    "read_npy_file",
    "write_npy_file",
]
