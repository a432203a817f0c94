"""Sparse matrix containers, format conversion and synthetic generation.

Two sparse layouts are supported:

``SparseTensorMatrix``
    COO-style storage. ``ids`` is a flat array of ``(row, col)`` pairs
    (``ids[2k]`` is the row of nonzero ``k``, ``ids[2k + 1]`` its column) and
    ``values[k]`` the value. Entries may appear in any order.

``CsrMatrix``
    Compressed sparse rows with column indices sorted inside every row.

Dense matrices are plain two-dimensional numpy arrays (``float32`` for single
precision, ``float64`` for double).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import FormatError, ParameterError

__all__ = [
    "SparseTensorMatrix",
    "CsrMatrix",
    "SparseBatch",
    "SparseMatrix",
    "PRECISIONS",
    "dtype_for",
    "coo_to_csr",
    "csr_to_coo",
    "random_sparse",
    "random_dense",
    "item_seeds",
]

PRECISIONS = {"single": np.float32, "f32": np.float32, "double": np.float64, "f64": np.float64}


def dtype_for(precision) -> np.dtype:
    """Map ``"single"``/``"double"`` (or ``f32``/``f64``, or a dtype) to a numpy dtype."""
    if isinstance(precision, str):
        try:
            return np.dtype(PRECISIONS[precision])
        except KeyError:
            raise ParameterError(f"unknown precision {precision!r}") from None
    dt = np.dtype(precision)
    if dt not in (np.float32, np.float64):
        raise ParameterError(f"unsupported dtype {dt}")
    return dt


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True).reshape(-1)
    out.flags.writeable = False
    return out


def _value_dtype(values):
    values = np.asarray(values)
    if values.dtype == np.float64:
        return np.float64
    return np.float32


@dataclass(frozen=True, eq=False)
class SparseTensorMatrix:
    rows: int
    cols: int
    ids: np.ndarray
    values: np.ndarray

    def __init__(self, rows, cols, ids, values, *, check=True):
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "cols", int(cols))
        object.__setattr__(self, "ids", _frozen(ids, np.int64))
        object.__setattr__(self, "values", _frozen(values, _value_dtype(values)))
        if check:
            self.validate()

    def validate(self):
        if self.rows < 0 or self.cols < 0:
            raise FormatError(f"negative shape ({self.rows}, {self.cols})")
        if self.ids.size != 2 * self.values.size:
            raise FormatError(
                f"ids has {self.ids.size} entries, expected 2 * {self.values.size}"
            )
        r, c = self.row_indices, self.col_indices
        if r.size:
            if r.min() < 0 or r.max() >= self.rows:
                raise FormatError(f"row index out of range [0, {self.rows})")
            if c.min() < 0 or c.max() >= self.cols:
                raise FormatError(f"column index out of range [0, {self.cols})")
            keys = r * max(self.cols, 1) + c
            if np.unique(keys).size != keys.size:
                raise FormatError("duplicate (row, col) entry")

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def row_indices(self) -> np.ndarray:
        return self.ids[0::2]

    @property
    def col_indices(self) -> np.ndarray:
        return self.ids[1::2]

    @classmethod
    def from_triples(cls, rows, cols, row_idx, col_idx, values):
        r = np.asarray(row_idx, dtype=np.int64)
        c = np.asarray(col_idx, dtype=np.int64)
        if r.shape != c.shape:
            raise FormatError("row and column index arrays differ in length")
        ids = np.empty(2 * r.size, dtype=np.int64)
        ids[0::2] = r
        ids[1::2] = c
        return cls(rows, cols, ids, values)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense)
        r, c = np.nonzero(dense)
        return cls.from_triples(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    def triples(self):
        """Entries as a list of ``(row, col, value)`` in storage order."""
        return [
            (int(r), int(c), float(v))
            for r, c, v in zip(self.row_indices, self.col_indices, self.values)
        ]

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=dtype)
        out[self.row_indices, self.col_indices] = self.values
        return out

    def astype(self, dtype) -> "SparseTensorMatrix":
        return SparseTensorMatrix(
            self.rows, self.cols, self.ids, self.values.astype(dtype), check=False
        )

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "cols": self.cols, "triples": self.triples()})

    def __eq__(self, other):
        if not isinstance(other, SparseTensorMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseTensorMatrix(shape={self.shape}, nnz={self.nnz})"


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    rows: int
    cols: int
    rpt: np.ndarray
    colids: np.ndarray
    values: np.ndarray

    def __init__(self, rows, cols, rpt, colids, values, *, check=True):
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "cols", int(cols))
        object.__setattr__(self, "rpt", _frozen(rpt, np.int64))
        object.__setattr__(self, "colids", _frozen(colids, np.int64))
        object.__setattr__(self, "values", _frozen(values, _value_dtype(values)))
        if check:
            self.validate()

    def validate(self):
        if self.rows < 0 or self.cols < 0:
            raise FormatError(f"negative shape ({self.rows}, {self.cols})")
        if self.rpt.size != self.rows + 1:
            raise FormatError(f"rpt has {self.rpt.size} entries, expected {self.rows + 1}")
        if self.rpt[0] != 0:
            raise FormatError("rpt[0] must be 0")
        if np.any(np.diff(self.rpt) < 0):
            raise FormatError("rpt must be non-decreasing")
        nnz = self.values.size
        if self.rpt[-1] != nnz or self.colids.size != nnz:
            raise FormatError(
                f"rpt[-1]={self.rpt[-1]}, {self.colids.size} colids, {nnz} values disagree"
            )
        if nnz:
            if self.colids.min() < 0 or self.colids.max() >= self.cols:
                raise FormatError(f"column index out of range [0, {self.cols})")
            # strictly increasing inside each row; row starts are exempt
            step = np.diff(self.colids) > 0
            starts = np.zeros(nnz, dtype=bool)
            starts[self.rpt[1:-1][self.rpt[1:-1] < nnz]] = True
            if not np.all(step | starts[1:]):
                raise FormatError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def row_of_entries(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.rpt))

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=dtype)
        out[self.row_of_entries(), self.colids] = self.values
        return out

    def astype(self, dtype) -> "CsrMatrix":
        return CsrMatrix(
            self.rows, self.cols, self.rpt, self.colids, self.values.astype(dtype), check=False
        )

    def transpose(self) -> "CsrMatrix":
        """The transpose, again in canonical CSR form."""
        rows = self.row_of_entries()
        order = np.lexsort((rows, self.colids))
        counts = np.bincount(self.colids, minlength=self.cols)
        rpt = np.concatenate([[0], np.cumsum(counts)])
        return CsrMatrix(self.cols, self.rows, rpt, rows[order], self.values[order], check=False)

    def to_json(self) -> str:
        triples = [
            (int(r), int(c), float(v))
            for r, c, v in zip(self.row_of_entries(), self.colids, self.values)
        ]
        return json.dumps({"rows": self.rows, "cols": self.cols, "triples": triples})

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rpt, other.rpt)
            and np.array_equal(self.colids, other.colids)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


SparseMatrix = Union[SparseTensorMatrix, CsrMatrix]


@dataclass(frozen=True)
class SparseBatch:
    """An ordered, nonempty batch of sparse matrices sharing one layout."""

    items: tuple
    uniform_dense_cols: int

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise ParameterError("a batch needs at least one matrix")
        kinds = {type(m) for m in items}
        if len(kinds) != 1 or not kinds <= {SparseTensorMatrix, CsrMatrix}:
            raise FormatError("all batch items must share one sparse layout")
        if self.uniform_dense_cols < 1:
            raise ParameterError("dense column count must be >= 1")

    @property
    def layout(self) -> str:
        return "csr" if isinstance(self.items[0], CsrMatrix) else "sparse_tensor"

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]


def coo_to_csr(a: SparseTensorMatrix) -> CsrMatrix:
    """Convert to canonical CSR (rows in order, columns sorted within a row)."""
    a.validate()
    r, c = a.row_indices, a.col_indices
    order = np.lexsort((c, r))
    counts = np.bincount(r, minlength=a.rows)
    rpt = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return CsrMatrix(a.rows, a.cols, rpt, c[order], a.values[order])


def csr_to_coo(a: CsrMatrix) -> SparseTensorMatrix:
    """Convert to SparseTensor layout; entries come out in row-major order."""
    return SparseTensorMatrix.from_triples(
        a.rows, a.cols, a.row_of_entries(), a.colids, a.values
    )


def item_seeds(seed: int, count: int) -> list[int]:
    """Independent per-item integer seeds derived from one master seed."""
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
    return [int(s) for s in state]


def random_sparse(
    dim: int,
    nnz_per_row: int,
    seed: int,
    shuffle: bool = True,
    *,
    adjacency: bool = False,
    precision="single",
) -> SparseTensorMatrix:
    """Square ``dim x dim`` matrix with exactly ``nnz_per_row`` entries per row.

    Column indices of each row are drawn without replacement; values are
    uniform in ``[0, 1)``. With ``shuffle`` the entry order is permuted, since
    SparseTensor inputs are not assumed to be sorted.

    ``adjacency=True`` produces a graph adjacency matrix instead: the diagonal
    is always present (self loops), the remaining ``nnz_per_row - 1`` entries of
    each row are sampled among the off-diagonal columns, and every value is 1.
    """
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if nnz_per_row < 0 or nnz_per_row > dim:
        raise ParameterError(f"nnz_per_row={nnz_per_row} must lie in [0, dim={dim}]")
    if adjacency and nnz_per_row < 1:
        raise ParameterError("adjacency matrices need nnz_per_row >= 1 for the self loop")
    dtype = dtype_for(precision)
    rng = np.random.default_rng(seed)

    rows = np.repeat(np.arange(dim, dtype=np.int64), nnz_per_row)
    cols = np.empty(dim * nnz_per_row, dtype=np.int64)
    for i in range(dim):
        seg = cols[i * nnz_per_row:(i + 1) * nnz_per_row]
        if adjacency:
            others = rng.choice(dim - 1, nnz_per_row - 1, replace=False)
            others = others + (others >= i)
            seg[0] = i
            seg[1:] = others
        else:
            seg[:] = rng.choice(dim, nnz_per_row, replace=False)

    if adjacency:
        values = np.ones(rows.size, dtype=dtype)
    else:
        values = rng.random(rows.size, dtype=np.float64).astype(dtype)
    if shuffle:
        perm = rng.permutation(rows.size)
        rows, cols, values = rows[perm], cols[perm], values[perm]
    return SparseTensorMatrix.from_triples(dim, dim, rows, cols, values)


def random_dense(rows: int, cols: int, seed: int, precision="single", low=0.0, high=1.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(rows, cols)).astype(dtype_for(precision))
