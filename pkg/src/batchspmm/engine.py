"""Batched execution: a whole batch of SpMM tasks under one launch plan.

Every work unit owns a disjoint region of one item's output, so units can run
on a thread pool in any order and still give bit-identical results.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ParameterError, PlanError, ShapeError
from .kernels import (
    LaneGroup,
    Scratchpad,
    WriteTrace,
    baseline_block,
    spmm_baseline,
    spmm_swa_csr,
    spmm_swa_st,
    swa_csr_block,
    swa_st_block,
)
from .matrices import SparseBatch, coo_to_csr, csr_to_coo
from .planner import NO_SCRATCHPAD, LaunchPlan, PlanInput, compute_subwarp, plan_batch

__all__ = [
    "ALGORITHMS",
    "BatchedSpmmRequest",
    "LaunchCounter",
    "PointerTable",
    "batched_spmm",
    "batched_spmm_stacked",
    "sequential_spmm",
    "copy_pointer_table",
    "plan_for",
]

ALGORITHMS = ("baseline", "swa_st", "swa_csr")


def layout_of(algorithm: str) -> str:
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    return "csr" if algorithm == "swa_csr" else "sparse_tensor"


class LaunchCounter:
    """Counts logical launches (one per engine entry, one per kernel call when not batched)."""

    def __init__(self):
        self.logical_launches = 0
        self.work_units_executed = 0
        self._lock = threading.Lock()

    def launch(self, n=1):
        with self._lock:
            self.logical_launches += n

    def unit_done(self):
        with self._lock:
            self.work_units_executed += 1

    def reset(self):
        with self._lock:
            self.logical_launches = 0
            self.work_units_executed = 0

    def __repr__(self):
        return (
            f"LaunchCounter(logical_launches={self.logical_launches}, "
            f"work_units_executed={self.work_units_executed})"
        )


@dataclass(frozen=True)
class BatchedSpmmRequest:
    """A batch of sparse matrices and their dense right-hand sides.

    ``dense`` is either one stacked matrix whose consecutive row slices feed
    the items in order (slice ``i`` has ``items[i].cols`` rows), or a sequence
    of per-item matrices.
    """

    batch: SparseBatch
    dense: Union[np.ndarray, Sequence[np.ndarray]]
    algorithm: str = "swa_csr"

    def __post_init__(self):
        layout = layout_of(self.algorithm)
        if self.batch.layout != layout:
            convert = coo_to_csr if layout == "csr" else csr_to_coo
            items = tuple(convert(a) for a in self.batch.items)
            object.__setattr__(
                self, "batch", SparseBatch(items, self.batch.uniform_dense_cols)
            )
        object.__setattr__(self, "dense", self._split_dense(self.dense))

    def _split_dense(self, dense):
        items = self.batch.items
        if isinstance(dense, np.ndarray):
            if dense.ndim != 2:
                raise ShapeError(f"stacked dense input must be 2-D, got {dense.shape}")
            need = sum(a.cols for a in items)
            if dense.shape[0] != need:
                raise ShapeError(f"stacked dense input has {dense.shape[0]} rows, items need {need}")
            offsets = np.cumsum([0] + [a.cols for a in items])
            parts = [dense[offsets[i]:offsets[i + 1]] for i in range(len(items))]
        else:
            parts = [np.asarray(d) for d in dense]
            if len(parts) != len(items):
                raise ShapeError(f"{len(parts)} dense inputs for {len(items)} sparse items")
        n_b = self.batch.uniform_dense_cols
        for i, (a, d) in enumerate(zip(items, parts)):
            if d.ndim != 2 or d.shape != (a.cols, n_b):
                raise ShapeError(f"item {i}: dense input {d.shape} does not match ({a.cols}, {n_b})")
        return tuple(parts)

    @property
    def layout(self) -> str:
        return layout_of(self.algorithm)

    @property
    def dtype(self):
        return np.result_type(*[d.dtype for d in self.dense])

    @classmethod
    def from_items(cls, items, dense, algorithm="swa_csr"):
        if isinstance(dense, np.ndarray):
            n_b = dense.shape[1]
        else:
            n_b = np.asarray(dense[0]).shape[1]
        return cls(SparseBatch(tuple(items), n_b), dense, algorithm)


def plan_for(req: BatchedSpmmRequest, **kwargs) -> LaunchPlan:
    """Plan a request from its own shapes; keyword arguments go to :class:`PlanInput`."""
    kwargs.setdefault("element_bytes", np.dtype(req.dtype).itemsize)
    return plan_batch(
        PlanInput(
            layout=req.layout,
            batch_rows=tuple(a.rows for a in req.batch.items),
            dense_cols=req.batch.uniform_dense_cols,
            **kwargs,
        )
    )


_TABLE_DTYPE = np.dtype(
    [
        ("rows", np.int64),
        ("cols", np.int64),
        ("nnz", np.int64),
        ("sparse_offset", np.int64),
        ("dense_offset", np.int64),
        ("out_offset", np.int64),
    ]
)


@dataclass(frozen=True)
class PointerTable:
    """Per-item descriptors packed in one contiguous buffer.

    Offsets count elements into the concatenated sparse values, dense inputs
    and outputs of the whole batch.
    """

    entries: np.ndarray
    n_b: int

    def __len__(self):
        return len(self.entries)

    def validate(self):
        e = self.entries
        if not e.flags.c_contiguous:
            raise PlanError("pointer table is not contiguous")
        for name, size in (("sparse_offset", e["nnz"]),
                           ("dense_offset", e["cols"] * self.n_b),
                           ("out_offset", e["rows"] * self.n_b)):
            expect = np.concatenate([[0], np.cumsum(size)[:-1]])
            if not np.array_equal(e[name], expect):
                raise PlanError(f"pointer table column {name} is inconsistent")


def copy_pointer_table(req: BatchedSpmmRequest) -> PointerTable:
    items = req.batch.items
    n_b = req.batch.uniform_dense_cols
    table = np.zeros(len(items), dtype=_TABLE_DTYPE)
    table["rows"] = [a.rows for a in items]
    table["cols"] = [a.cols for a in items]
    table["nnz"] = [a.nnz for a in items]
    for name, size in (("sparse_offset", table["nnz"]),
                       ("dense_offset", table["cols"] * n_b),
                       ("out_offset", table["rows"] * n_b)):
        table[name][1:] = np.cumsum(size)[:-1]
    return PointerTable(table, n_b)


def _check_plan(req: BatchedSpmmRequest, plan: LaunchPlan):
    rows = tuple(a.rows for a in req.batch.items)
    if plan.layout != req.layout:
        raise PlanError(f"plan layout {plan.layout!r} does not match request layout {req.layout!r}")
    if plan.batch_rows != rows:
        raise PlanError("plan was built for a different batch")
    if plan.dense_cols != req.batch.uniform_dense_cols:
        raise PlanError(f"plan has n_B={plan.dense_cols}, request has {req.batch.uniform_dense_cols}")


def _run_unit(unit, plan, req, outputs, counter, traces):
    a = req.batch.items[unit.item]
    b = req.dense[unit.item][:, unit.col_start:unit.col_stop]
    out = outputs[unit.item]
    group = LaneGroup(plan.subwarp)
    direct = plan.case == NO_SCRATCHPAD

    if req.layout == "csr":
        r0, r1 = unit.row_start, unit.row_stop
        if direct:
            buf, offset = out[:, unit.col_start:unit.col_stop], 0
        else:
            pad = Scratchpad(plan.scratchpad_budget_bytes)
            buf, offset = pad.allocate(plan.groups_per_block, unit.width, out.dtype), r0
        swa_csr_block(buf, a, b, group, r0, r1, row_offset=offset)
        if not direct:
            out[r0:r1, unit.col_start:unit.col_stop] = buf[: r1 - r0]
        written = range(r0, r1)
    else:
        if direct:
            buf = out[:, unit.col_start:unit.col_stop]
        else:
            pad = Scratchpad(plan.scratchpad_budget_bytes)
            buf = pad.allocate(a.rows, unit.width, out.dtype)
        if req.algorithm == "baseline":
            baseline_block(buf, a, b)
        else:
            swa_st_block(buf, a, b, group)
        if not direct:
            out[:, unit.col_start:unit.col_stop] = buf
        written = range(a.rows)

    if traces is not None:
        for r in written:
            traces[unit.item].record(unit.index, r, unit.col_start, unit.col_stop)
    if counter is not None:
        counter.unit_done()


def batched_spmm_stacked(
    req: BatchedSpmmRequest,
    plan: LaunchPlan,
    *,
    counter: LaunchCounter | None = None,
    workers: int = 1,
    traces: list | None = None,
):
    """Run the batch as one logical launch.

    Returns ``(stacked, views)``: all outputs live in one contiguous
    ``(sum of rows) x n_B`` buffer and ``views[i]`` is item ``i``'s row slice.
    ``traces``, if given, must be a list that receives one :class:`WriteTrace`
    per item recording which work unit wrote each output entry.
    """
    _check_plan(req, plan)
    if counter is not None:
        counter.launch()
    table = copy_pointer_table(req)
    table.validate()

    n_b = req.batch.uniform_dense_cols
    total_rows = int(table.entries["rows"].sum())
    stacked = np.zeros((total_rows, n_b), dtype=req.dtype)
    starts = table.entries["out_offset"] // n_b
    views = [stacked[s:s + a.rows] for s, a in zip(starts.tolist(), req.batch.items)]

    if traces is not None:
        traces[:] = [WriteTrace(v.shape) for v in views]
        traces_arg = traces
    else:
        traces_arg = None

    units = plan.work_units
    if workers <= 1:
        for u in units:
            _run_unit(u, plan, req, views, counter, traces_arg)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_unit, u, plan, req, views, counter, traces_arg) for u in units]
            for f in futures:
                f.result()
    return stacked, views


def batched_spmm(req: BatchedSpmmRequest, plan: LaunchPlan | None = None, **kwargs) -> list:
    """Compute ``A_i @ B_i`` for every item under ``plan`` in one logical launch.

    Without a plan, one is built from the request with default budgets.
    """
    if plan is None:
        plan = plan_for(req)
    _, views = batched_spmm_stacked(req, plan, **kwargs)
    return views


def sequential_spmm(req: BatchedSpmmRequest, *, counter: LaunchCounter | None = None) -> list:
    """Non-batched path: one kernel launch per item.

    The baseline kernel also pays a separate zero-fill launch per item.
    """
    group = compute_subwarp(req.batch.uniform_dense_cols)
    outs = []
    for a, b in zip(req.batch.items, req.dense):
        if req.algorithm == "baseline":
            if counter is not None:
                counter.launch(2)
            outs.append(spmm_baseline(a, b))
        elif req.algorithm == "swa_st":
            if counter is not None:
                counter.launch()
            outs.append(spmm_swa_st(a, b, group))
        else:
            if counter is not None:
                counter.launch()
            outs.append(spmm_swa_csr(a, b, group))
    return outs
