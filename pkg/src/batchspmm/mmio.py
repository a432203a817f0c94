"""Reading and writing MatrixMarket ``coordinate real general`` files.

Only the general real/integer coordinate variant is accepted; symmetric,
pattern and complex files are rejected with a :class:`MatrixMarketError`.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import MatrixMarketError
from .matrices import CsrMatrix, SparseTensorMatrix, csr_to_coo

__all__ = ["load_matrix_market", "parse_matrix_market", "write_matrix_market", "format_matrix_market"]

_BANNER = "%%MatrixMarket"


def _parse_header(line, lineno, path):
    tokens = line.split()
    if len(tokens) != 5 or tokens[0] != _BANNER:
        raise MatrixMarketError(f"malformed header {line.strip()!r}", lineno, path)
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", lineno, path)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r}, need 'coordinate'", lineno, path)
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"unsupported field {field!r}", lineno, path)
    if symmetry != "general":
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", lineno, path)


def parse_matrix_market(text: str, path=None, dtype=np.float32) -> SparseTensorMatrix:
    """Parse MatrixMarket text. 1-based indices become 0-based."""
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1, path)
    _parse_header(lines[0], 1, path)

    size = None
    rows, cols, vals = [], [], []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        tokens = stripped.split()
        if size is None:
            if len(tokens) != 3:
                raise MatrixMarketError("size line must have 3 integers", lineno, path)
            try:
                size = tuple(int(t) for t in tokens)
            except ValueError:
                raise MatrixMarketError(f"bad size line {stripped!r}", lineno, path) from None
            if min(size) < 0:
                raise MatrixMarketError("negative size", lineno, path)
            continue
        if len(tokens) != 3:
            raise MatrixMarketError(f"entry needs 'row col value', got {stripped!r}", lineno, path)
        try:
            r, c, v = int(tokens[0]) - 1, int(tokens[1]) - 1, float(tokens[2])
        except ValueError:
            raise MatrixMarketError(f"bad entry {stripped!r}", lineno, path) from None
        if not (0 <= r < size[0] and 0 <= c < size[1]):
            raise MatrixMarketError(
                f"index ({r + 1}, {c + 1}) outside {size[0]}x{size[1]}", lineno, path
            )
        if (r, c) in seen:
            raise MatrixMarketError(f"duplicate entry ({r + 1}, {c + 1})", lineno, path)
        seen.add((r, c))
        rows.append(r)
        cols.append(c)
        vals.append(v)

    if size is None:
        raise MatrixMarketError("missing size line", len(lines), path)
    if len(vals) != size[2]:
        raise MatrixMarketError(
            f"size line announces {size[2]} entries, found {len(vals)}", len(lines), path
        )
    return SparseTensorMatrix.from_triples(
        size[0], size[1], rows, cols, np.asarray(vals, dtype=dtype)
    )


def load_matrix_market(path, dtype=np.float32) -> SparseTensorMatrix:
    with open(path, encoding="ascii") as fh:
        return parse_matrix_market(fh.read(), path=os.fspath(path), dtype=dtype)


def _fmt(v, dtype):
    # str() of a numpy scalar is the shortest string that round-trips at that precision
    return str(dtype.type(v))


def format_matrix_market(a) -> str:
    if isinstance(a, CsrMatrix):
        a = csr_to_coo(a)
    dtype = a.values.dtype
    out = [f"{_BANNER} matrix coordinate real general", f"{a.rows} {a.cols} {a.nnz}"]
    for r, c, v in zip(a.row_indices, a.col_indices, a.values):
        out.append(f"{r + 1} {c + 1} {_fmt(v, dtype)}")
    return "\n".join(out) + "\n"


def write_matrix_market(a, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_matrix_market(a))
