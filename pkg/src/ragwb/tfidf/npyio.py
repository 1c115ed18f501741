"""Minimal NPY (version 1.0) codec for 2-D float64 matrices.

Layout of a file produced here:

* 6 magic bytes ``\\x93NUMPY``
* version bytes ``0x01 0x00``
* header length as a little-endian unsigned 16-bit integer
* an ASCII header dict ``{'descr': '<f8', 'fortran_order': False,
  'shape': (R, C), }`` padded with spaces and closed with a newline so
  the whole preamble is a multiple of 64 bytes
* R*C little-endian float64 values in row-major order

The writer always emits the minimal padding, so output is byte-identical
to what the reference array library produces for the same matrix. The
reader rejects anything it cannot fully account for: wrong magic, an
unsupported version, a non-float64 descr, Fortran order, a malformed
header, and payloads that are too short or too long all raise distinct
exception types.
"""

from __future__ import annotations

import ast
import math
import struct
import sys
from array import array
from pathlib import Path
from typing import Sequence

from ..errors import WorkbenchError

MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_ALIGN = 64
_ITEMSIZE = 8
_HEADER_KEYS = {"descr", "fortran_order", "shape"}


class NpyError(WorkbenchError):
    """Base for matrix codec failures."""


class NpyMagicError(NpyError):
    """Input does not start with the NPY magic bytes."""


class NpyVersionError(NpyError):
    """Format version other than 1.0."""


class NpyHeaderError(NpyError):
    """Header is not the expected ASCII dict."""


class NpyDtypeError(NpyError):
    """Element type other than little-endian float64."""


class NpyOrderError(NpyError):
    """Column-major (Fortran) data is not supported."""


class NpyTruncatedError(NpyError):
    """Buffer ends before the header or payload is complete."""


class NpyTrailingDataError(NpyError):
    """Bytes remain after the declared payload."""


class NpyValueError(NpyError):
    """Matrix handed to the writer is not a finite rectangular 2-D grid."""


def _build_preamble(rows: int, cols: int) -> bytes:
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': (%d, %d), }" % (
        rows,
        cols,
    )
    base = len(MAGIC) + len(_VERSION) + 2 + len(header) + 1
    header += " " * ((-base) % _ALIGN) + "\n"
    if len(header) > 0xFFFF:
        raise NpyValueError("header too large for version 1.0")
    return MAGIC + _VERSION + struct.pack("<H", len(header)) + header.encode("ascii")


def npy_write(matrix: Sequence[Sequence[float]], cols: int | None = None) -> bytes:
    """Encode a rectangular matrix of finite floats.

    *cols* is only needed for a zero-row matrix, where the width cannot
    be inferred.
    """
    n_rows = len(matrix)
    if n_rows == 0:
        if cols is None:
            raise NpyValueError("cannot infer column count of an empty matrix")
        n_cols = cols
    else:
        n_cols = len(matrix[0])
        if cols is not None and cols != n_cols:
            raise NpyValueError(f"cols={cols} does not match row width {n_cols}")

    payload = array("d")
    for i, row in enumerate(matrix):
        if len(row) != n_cols:
            raise NpyValueError(
                f"row {i} has {len(row)} columns, expected {n_cols}"
            )
        try:
            for value in row:
                if not math.isfinite(value):
                    raise NpyValueError(f"row {i} contains a non-finite value")
        except TypeError as exc:
            raise NpyValueError(f"row {i} contains a non-numeric value") from exc
        payload.extend(row)
    if sys.byteorder == "big":
        payload.byteswap()
    return _build_preamble(n_rows, n_cols) + payload.tobytes()


def npy_read(data: bytes) -> tuple[tuple[int, int], array]:
    """Decode into ``((rows, cols), values)`` with a flat row-major array."""
    if not data.startswith(MAGIC):
        raise NpyMagicError("not an NPY file (bad magic bytes)")
    if len(data) < len(MAGIC) + 2:
        raise NpyTruncatedError("buffer ends inside the version field")
    version = data[6:8]
    if version != _VERSION:
        raise NpyVersionError(
            f"unsupported format version {version[0]}.{version[1]}"
        )
    if len(data) < 10:
        raise NpyTruncatedError("buffer ends inside the header length field")
    (header_len,) = struct.unpack_from("<H", data, 8)
    header_end = 10 + header_len
    if len(data) < header_end:
        raise NpyTruncatedError("buffer ends inside the header")

    try:
        header_text = data[10:header_end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise NpyHeaderError("header is not ASCII") from exc
    try:
        header = ast.literal_eval(header_text)
    except (ValueError, SyntaxError) as exc:
        raise NpyHeaderError(f"cannot parse header dict: {exc}") from exc
    if not isinstance(header, dict) or set(header) != _HEADER_KEYS:
        raise NpyHeaderError("header must have exactly descr/fortran_order/shape")

    if header["descr"] != "<f8":
        raise NpyDtypeError(f"unsupported descr {header['descr']!r}")
    order = header["fortran_order"]
    if not isinstance(order, bool):
        raise NpyHeaderError("fortran_order must be a boolean")
    if order:
        raise NpyOrderError("Fortran-ordered data is not supported")
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) != 2
        or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape)
    ):
        raise NpyHeaderError(f"shape must be a pair of non-negative ints, got {shape!r}")

    rows, cols = shape
    expected = rows * cols * _ITEMSIZE
    payload = data[header_end:]
    if len(payload) < expected:
        raise NpyTruncatedError(
            f"payload has {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise NpyTrailingDataError(
            f"{len(payload) - expected} unexpected byte(s) after the payload"
        )

    values = array("d")
    values.frombytes(payload)
    if sys.byteorder == "big":
        values.byteswap()
    return (rows, cols), values


def write_npy_file(path: str | Path, matrix: Sequence[Sequence[float]], cols: int | None = None) -> None:
    Path(path).write_bytes(npy_write(matrix, cols))


def read_npy_file(path: str | Path) -> tuple[tuple[int, int], array]:
    return npy_read(Path(path).read_bytes())
