"""Single-matrix SpMM kernels on an emulated lane-group thread model.

A lane group of ``width`` lanes stands in for a GPU sub-warp. When a group
owns a nonzero (or a row) and sweeps the ``n`` output columns, lane ``l``
handles columns ``l, l + width, l + 2 * width, ...``. All lanes of a group run
in lockstep, so one sweep step updates the ``width`` contiguous columns
``[t * width, t * width + width)`` at once; that is how the emulation executes
them.

Atomic adds of the GPU kernels are replaced by a fixed serial order (ascending
nonzero index), which makes every kernel bit-reproducible.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ScratchpadOverflow, ShapeError
from .matrices import CsrMatrix, SparseTensorMatrix

__all__ = [
    "LaneGroup",
    "Scratchpad",
    "WriteTrace",
    "DEFAULT_SCRATCHPAD_BYTES",
    "spmm_baseline",
    "spmm_swa_st",
    "spmm_swa_csr",
    "gemm_oracle",
    "spmm_grad_dense",
    "spmm_grad_values",
]

DEFAULT_SCRATCHPAD_BYTES = 32768
_WIDTHS = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class LaneGroup:
    width: int

    def __post_init__(self):
        if self.width not in _WIDTHS:
            raise ParameterError(f"lane-group width must be one of {_WIDTHS}, got {self.width}")

    def lane_columns(self, lane: int, n: int) -> range:
        """Columns of an ``n``-wide row touched by ``lane``."""
        if not 0 <= lane < self.width:
            raise ParameterError(f"lane {lane} outside [0, {self.width})")
        return range(lane, n, self.width)

    def steps(self, n: int):
        """Lockstep sweep over ``n`` columns as ``(start, stop)`` pairs."""
        w = self.width
        return [(s, min(s + w, n)) for s in range(0, n, w)]


def _as_lane_group(subwarp) -> LaneGroup:
    return subwarp if isinstance(subwarp, LaneGroup) else LaneGroup(int(subwarp))


class Scratchpad:
    """Per-work-unit fast buffer with a hard byte budget."""

    def __init__(self, capacity_bytes: int = DEFAULT_SCRATCHPAD_BYTES):
        self.capacity_bytes = int(capacity_bytes)
        self.used_bytes = 0

    def allocate(self, rows: int, cols: int, dtype) -> np.ndarray:
        need = rows * cols * np.dtype(dtype).itemsize
        if self.used_bytes + need > self.capacity_bytes:
            raise ScratchpadOverflow(
                f"scratchpad request of {need} B exceeds budget "
                f"({self.used_bytes}/{self.capacity_bytes} B in use)"
            )
        self.used_bytes += need
        return np.zeros((rows, cols), dtype=dtype)


class WriteTrace:
    """Records which writer (lane group or work unit) touched each output entry.

    ``max_writers()`` is the largest number of distinct writers seen by any
    entry; a race-free schedule keeps it at 1.
    """

    def __init__(self, shape):
        self.owner = np.full(shape, -1, dtype=np.int64)
        self.writers = np.zeros(shape, dtype=np.int64)
        self._lock = threading.Lock()

    def record(self, writer: int, row: int, col_start: int, col_stop: int):
        with self._lock:
            own = self.owner[row, col_start:col_stop]
            cnt = self.writers[row, col_start:col_stop]
            cnt += own != writer
            own[:] = writer

    def max_writers(self) -> int:
        return int(self.writers.max()) if self.writers.size else 0


def _check_operands(a, b):
    b = np.asarray(b)
    if b.ndim != 2:
        raise ShapeError(f"dense operand must be 2-D, got shape {b.shape}")
    if a.cols != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} sparse by {b.shape[0]}x{b.shape[1]}")
    if b.dtype not in (np.float32, np.float64):
        b = b.astype(np.float32)
    return b


# Block-level bodies. ``out`` and ``b`` are already restricted to one column
# block; writes land in ``out`` at row ``r - row_offset``. The batch engine
# runs these on scratchpads, the single-matrix kernels on the full output.


def baseline_block(out, a: SparseTensorMatrix, b, row_offset=0):
    vals = a.values.astype(b.dtype, copy=False)
    for r, c, v in zip(a.row_indices.tolist(), a.col_indices.tolist(), vals):
        out[r - row_offset] += v * b[c]


def swa_st_block(out, a: SparseTensorMatrix, b, group: LaneGroup, trace=None, col_offset=0):
    vals = a.values.astype(b.dtype, copy=False)
    steps = group.steps(b.shape[1])
    for k, (r, c, v) in enumerate(zip(a.row_indices.tolist(), a.col_indices.tolist(), vals)):
        orow, brow = out[r], b[c]
        for s, e in steps:
            orow[s:e] += v * brow[s:e]
        if trace is not None:
            trace.record(k, r, col_offset, col_offset + b.shape[1])


def swa_csr_block(
    out, a: CsrMatrix, b, group: LaneGroup, row_start, row_stop, row_offset=0,
    trace=None, col_offset=0,
):
    vals = a.values.astype(b.dtype, copy=False)
    rpt, colids = a.rpt.tolist(), a.colids.tolist()
    steps = group.steps(b.shape[1])
    for rid in range(row_start, row_stop):
        orow = out[rid - row_offset]
        for nz in range(rpt[rid], rpt[rid + 1]):
            v, brow = vals[nz], b[colids[nz]]
            for s, e in steps:
                orow[s:e] += v * brow[s:e]
        if trace is not None:
            trace.record(rid, rid, col_offset, col_offset + b.shape[1])


def spmm_baseline(a: SparseTensorMatrix, b) -> np.ndarray:
    """Reference SparseTensor SpMM: one (nonzero, column) product at a time."""
    b = _check_operands(a, b)
    c = np.zeros((a.rows, b.shape[1]), dtype=b.dtype)
    baseline_block(c, a, b)
    return c


def spmm_swa_st(a: SparseTensorMatrix, b, subwarp, *, trace: WriteTrace | None = None) -> np.ndarray:
    """Sub-warp-assigned SpMM over SparseTensor storage (one lane group per nonzero)."""
    b = _check_operands(a, b)
    group = _as_lane_group(subwarp)
    c = np.zeros((a.rows, b.shape[1]), dtype=b.dtype)
    swa_st_block(c, a, b, group, trace=trace)
    return c


def spmm_swa_csr(a: CsrMatrix, b, subwarp, *, trace: WriteTrace | None = None) -> np.ndarray:
    """Sub-warp-assigned SpMM over CSR storage (one lane group per row, no races)."""
    b = _check_operands(a, b)
    group = _as_lane_group(subwarp)
    c = np.zeros((a.rows, b.shape[1]), dtype=b.dtype)
    swa_csr_block(c, a, b, group, 0, a.rows, trace=trace)
    return c


def gemm_oracle(a_dense, b, out_dtype=None) -> np.ndarray:
    """Dense product accumulated in double precision, rounded to ``out_dtype``.

    ``out_dtype`` defaults to the dtype of ``b``.
    """
    a64 = np.asarray(a_dense, dtype=np.float64)
    b_arr = np.asarray(b)
    if a64.ndim != 2 or b_arr.ndim != 2 or a64.shape[1] != b_arr.shape[0]:
        raise ShapeError(f"cannot multiply {a64.shape} by {b_arr.shape}")
    if out_dtype is None:
        out_dtype = b_arr.dtype if b_arr.dtype in (np.float32, np.float64) else np.float64
    return (a64 @ b_arr.astype(np.float64)).astype(out_dtype)


def spmm_grad_dense(a: CsrMatrix, grad_c, subwarp=None, a_t: CsrMatrix | None = None) -> np.ndarray:
    """Gradient of ``C = A @ B`` with respect to ``B``, i.e. ``A.T @ grad_c``.

    Runs the CSR kernel on the transposed matrix; pass ``a_t`` to reuse a
    transpose computed earlier.
    """
    grad_c = np.asarray(grad_c)
    if grad_c.ndim != 2 or grad_c.shape[0] != a.rows:
        raise ShapeError(f"grad_c shape {grad_c.shape} does not match {a.rows} output rows")
    if subwarp is None:
        from .planner import compute_subwarp

        subwarp = compute_subwarp(max(grad_c.shape[1], 1))
    if a_t is None:
        a_t = a.transpose()
    return spmm_swa_csr(a_t, grad_c, subwarp)


def spmm_grad_values(a_pattern: CsrMatrix, b, grad_c) -> np.ndarray:
    """Gradient with respect to the stored values, in CSR storage order.

    Entry ``k`` at ``(i, j)`` receives ``dot(grad_c[i], b[j])``.
    """
    b = np.asarray(b)
    grad_c = np.asarray(grad_c)
    if b.ndim != 2 or grad_c.ndim != 2:
        raise ShapeError("b and grad_c must be 2-D")
    if a_pattern.cols != b.shape[0] or a_pattern.rows != grad_c.shape[0] or b.shape[1] != grad_c.shape[1]:
        raise ShapeError(
            f"inconsistent shapes: A {a_pattern.shape}, B {b.shape}, grad_C {grad_c.shape}"
        )
    rows = a_pattern.row_of_entries()
    dtype = np.result_type(b.dtype, grad_c.dtype)
    return np.einsum("ij,ij->i", grad_c[rows].astype(dtype), b[a_pattern.colids].astype(dtype))
