"""Launch planning for batched SpMM.

A plan fixes the lane-group width, decides whether outputs fit the per-block
scratchpad whole or must be split into column blocks, and enumerates the work
units (the CPU stand-in for thread blocks) of one logical launch.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .errors import ParameterError
from .kernels import DEFAULT_SCRATCHPAD_BYTES, LaneGroup

__all__ = [
    "FITS_WHOLE",
    "COLUMN_BLOCKED",
    "NO_SCRATCHPAD",
    "PlanInput",
    "WorkUnit",
    "LaunchPlan",
    "compute_subwarp",
    "plan_batch",
    "plan_batch_st",
    "plan_batch_csr",
    "scratch_bytes",
]

FITS_WHOLE = "fits_whole"
COLUMN_BLOCKED = "column_blocked"
NO_SCRATCHPAD = "no_scratchpad"

LAYOUTS = ("sparse_tensor", "csr")


def compute_subwarp(n_b: int) -> LaneGroup:
    """Lane-group width for a dense operand with ``n_b`` columns.

    32 lanes once ``n_b`` exceeds 16, otherwise the smallest power of two
    that covers ``n_b``.
    """
    if n_b < 1:
        raise ParameterError(f"n_b must be >= 1, got {n_b}")
    if n_b > 16:
        return LaneGroup(32)
    return LaneGroup(1 << (n_b - 1).bit_length())


@dataclass(frozen=True)
class PlanInput:
    layout: str
    batch_rows: tuple
    dense_cols: int
    element_bytes: int = 4
    scratchpad_budget_bytes: int = DEFAULT_SCRATCHPAD_BYTES
    threads_per_block: int = 128

    def __post_init__(self):
        object.__setattr__(self, "batch_rows", tuple(int(m) for m in self.batch_rows))
        if self.layout not in LAYOUTS:
            raise ParameterError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if not self.batch_rows:
            raise ParameterError("batch must be nonempty")
        if min(self.batch_rows) < 0:
            raise ParameterError("row counts must be non-negative")
        if self.dense_cols < 1:
            raise ParameterError("dense_cols must be >= 1")
        if self.element_bytes < 1 or self.scratchpad_budget_bytes < 1:
            raise ParameterError("element_bytes and scratchpad budget must be positive")
        if self.threads_per_block < 32 or self.threads_per_block % 32:
            raise ParameterError(
                f"threads_per_block must be a positive multiple of 32, got {self.threads_per_block}"
            )


@dataclass(frozen=True)
class WorkUnit:
    """One thread block: an item's column block, optionally a row range of it.

    ``row_start == row_stop`` marks a block whose lane groups all fall beyond
    the item's last row; it exists in the launch but does no work.
    """

    index: int
    item: int
    col_start: int
    col_stop: int
    row_start: int
    row_stop: int

    @property
    def width(self) -> int:
        return self.col_stop - self.col_start


@dataclass(frozen=True)
class LaunchPlan:
    layout: str
    subwarp: int
    case: str
    p: int
    block_width: int
    work_units: tuple
    total_threads: int
    total_blocks: int
    batch_rows: tuple
    dense_cols: int
    element_bytes: int
    scratchpad_budget_bytes: int
    threads_per_block: int
    groups_per_block: int
    launches: int = field(default=1)

    @property
    def batch_size(self) -> int:
        return len(self.batch_rows)

    def units_for(self, item: int):
        return [u for u in self.work_units if u.item == item]

    def summary(self) -> dict:
        return {
            "layout": self.layout,
            "case": self.case,
            "subwarp": self.subwarp,
            "p": self.p,
            "block_width": self.block_width,
            "batch_size": self.batch_size,
            "max_rows": max(self.batch_rows),
            "dense_cols": self.dense_cols,
            "total_blocks": self.total_blocks,
            "total_threads": self.total_threads,
            "threads_per_block": self.threads_per_block,
            "groups_per_block": self.groups_per_block,
            "scratchpad_budget_bytes": self.scratchpad_budget_bytes,
            "element_bytes": self.element_bytes,
            "launches": self.launches,
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["work_units"] = [
            dict(asdict(u), scratch_bytes=scratch_bytes(u, self)) for u in self.work_units
        ]
        return out

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _column_blocks(n, width):
    return [(s, min(s + width, n)) for s in range(0, n, width)]


def plan_batch_st(inp: PlanInput) -> LaunchPlan:
    """Plan a SparseTensor batch: one work unit per item and column block.

    The case is decided by the largest output in the batch and applied to
    every item, so ``p`` is uniform.
    """
    if inp.layout != "sparse_tensor":
        raise ParameterError("plan_batch_st needs layout='sparse_tensor'")
    n, eb, budget = inp.dense_cols, inp.element_bytes, inp.scratchpad_budget_bytes
    w = compute_subwarp(n).width
    m_max = max(inp.batch_rows)

    if m_max * n * eb <= budget:
        case, width = FITS_WHOLE, n
    elif m_max * eb <= budget:
        case = COLUMN_BLOCKED
        fit = budget // (m_max * eb)
        width = (fit // w) * w or fit
    else:
        case, width = NO_SCRATCHPAD, n

    blocks = _column_blocks(n, width)
    units = []
    for item, m in enumerate(inp.batch_rows):
        for s, e in blocks:
            units.append(WorkUnit(len(units), item, s, e, 0, m))
    total_blocks = len(units)
    return LaunchPlan(
        layout=inp.layout,
        subwarp=w,
        case=case,
        p=len(blocks),
        block_width=width,
        work_units=tuple(units),
        total_threads=total_blocks * inp.threads_per_block,
        total_blocks=total_blocks,
        batch_rows=inp.batch_rows,
        dense_cols=n,
        element_bytes=eb,
        scratchpad_budget_bytes=budget,
        threads_per_block=inp.threads_per_block,
        groups_per_block=inp.threads_per_block // w,
    )


def plan_batch_csr(inp: PlanInput) -> LaunchPlan:
    """Plan a CSR batch: one lane group per row, ``threads_per_block // subwarp`` rows per block.

    Each lane group keeps one ``block_width``-wide output row in scratchpad.
    Thread accounting uses the largest item for every item; blocks beyond a
    smaller item's last row are launched but idle.
    """
    if inp.layout != "csr":
        raise ParameterError("plan_batch_csr needs layout='csr'")
    n, eb, budget = inp.dense_cols, inp.element_bytes, inp.scratchpad_budget_bytes
    tb = inp.threads_per_block
    w = compute_subwarp(n).width
    groups = tb // w
    m_max = max(inp.batch_rows)

    scratch = groups * n * eb
    if scratch <= budget:
        case, width = FITS_WHOLE, n
    elif groups * eb <= budget:
        case = COLUMN_BLOCKED
        p = math.ceil(scratch / budget)
        width = math.ceil(n / p)
        while groups * width * eb > budget:
            p += 1
            width = math.ceil(n / p)
    else:
        case, width = NO_SCRATCHPAD, n

    blocks = _column_blocks(n, width)
    p = len(blocks)
    row_blocks = max(1, math.ceil(m_max * w / tb))
    units = []
    for item, m in enumerate(inp.batch_rows):
        for rb in range(row_blocks):
            r0 = min(rb * groups, m)
            r1 = min(r0 + groups, m)
            for s, e in blocks:
                units.append(WorkUnit(len(units), item, s, e, r0, r1))
    return LaunchPlan(
        layout=inp.layout,
        subwarp=w,
        case=case,
        p=p,
        block_width=width,
        work_units=tuple(units),
        total_threads=m_max * w * len(inp.batch_rows) * p,
        total_blocks=len(units),
        batch_rows=inp.batch_rows,
        dense_cols=n,
        element_bytes=eb,
        scratchpad_budget_bytes=budget,
        threads_per_block=tb,
        groups_per_block=groups,
    )


def plan_batch(inp: PlanInput) -> LaunchPlan:
    if inp.layout == "csr":
        return plan_batch_csr(inp)
    return plan_batch_st(inp)


def scratch_bytes(unit: WorkUnit, plan: LaunchPlan) -> int:
    """Scratchpad bytes a work unit of ``plan`` holds."""
    if plan.case == NO_SCRATCHPAD:
        return 0
    if plan.layout == "csr":
        return plan.groups_per_block * plan.block_width * plan.element_bytes
    return plan.batch_rows[unit.item] * plan.block_width * plan.element_bytes
