"""Benchmark harness: synthetic batches, sequential vs batched timing, reports."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .engine import (
    ALGORITHMS,
    BatchedSpmmRequest,
    LaunchCounter,
    batched_spmm,
    layout_of,
    plan_for,
    sequential_spmm,
)
from .errors import ParameterError
from .matrices import SparseBatch, coo_to_csr, dtype_for, item_seeds, random_dense, random_sparse
from .mmio import load_matrix_market
from .planner import PlanInput, compute_subwarp, plan_batch

__all__ = [
    "BenchConfig",
    "BenchRow",
    "BenchReport",
    "flops",
    "generate_batch",
    "item_shapes",
    "run_benchmark",
    "run_mixed_benchmark",
    "explain_plan",
]

MODES = ("sequential", "batched")


def _spec(value) -> str:
    if isinstance(value, tuple):
        lo, hi = value
        return str(lo) if lo == hi else f"{lo}:{hi}"
    return str(value)


@dataclass
class BenchConfig:
    batch_size: int = 100
    dim: int | tuple = 50
    nnz_per_row: int | tuple = 3
    n_b_values: Sequence[int] = (8, 16, 32, 64, 128, 256, 512)
    algorithms: Sequence[str] = ALGORITHMS
    modes: Sequence[str] = MODES
    repeats: int = 10
    seed: int = 0
    precision: str = "f32"
    budget_bytes: int = 32768
    threads_per_block: int = 128
    workers: int = 1
    inputs: Sequence[str] = ()

    def validate(self):
        if self.repeats < 1:
            raise ParameterError("repeats must be >= 1")
        if not self.inputs and self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not self.n_b_values or min(self.n_b_values) < 1:
            raise ParameterError("n_b values must be a nonempty list of positive integers")
        for name in ("dim", "nnz_per_row"):
            lo, hi = _range(getattr(self, name))
            if lo > hi:
                raise ParameterError(f"{name} range {lo}:{hi} is empty")
        if _range(self.dim)[0] < 1 or _range(self.nnz_per_row)[0] < 0:
            raise ParameterError("dim must be >= 1 and nnz_per_row >= 0")
        if _range(self.nnz_per_row)[0] > _range(self.dim)[1]:
            raise ParameterError("nnz_per_row cannot exceed dim")
        if not isinstance(self.dim, tuple) and _range(self.nnz_per_row)[1] > self.dim:
            raise ParameterError(f"nnz_per_row {_spec(self.nnz_per_row)} exceeds dim {self.dim}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ParameterError(f"unknown algorithm {a!r}")
        for m in self.modes:
            if m not in MODES:
                raise ParameterError(f"unknown mode {m!r}")
        dtype_for(self.precision)
        if self.threads_per_block < 32 or self.threads_per_block % 32:
            raise ParameterError("threads_per_block must be a positive multiple of 32")
        if self.budget_bytes < 1 or self.workers < 1:
            raise ParameterError("budget_bytes and workers must be positive")

    @property
    def mixed(self) -> bool:
        return isinstance(self.dim, tuple) or isinstance(self.nnz_per_row, tuple)


def _range(v):
    return v if isinstance(v, tuple) else (v, v)


@dataclass
class BenchRow:
    # column order: the first ten columns are the stable CSV contract
    algorithm: str
    batch_size: int
    dim_spec: str
    nnz_spec: str
    n_b: int
    mean_seconds: float
    flops: float
    launches: int
    case: str
    p: int
    mode: str
    total_nnz: int
    work_units: int
    subwarp: int


_INT_COLS = {f.name for f in fields(BenchRow) if f.type == "int"}
_FLOAT_COLS = {f.name for f in fields(BenchRow) if f.type == "float"}


def flops(total_nnz: int, n_b: int, seconds: float) -> float:
    """Throughput ``2 * nnz * n_B / seconds``."""
    return 2.0 * total_nnz * n_b / seconds


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(BenchRow)]
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            d = asdict(r)
            d.update({k: repr(d[k]) for k in _FLOAT_COLS})
            writer.writerow(d)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        rows = []
        for d in csv.DictReader(io.StringIO(text)):
            for k in _INT_COLS:
                d[k] = int(d[k])
            for k in _FLOAT_COLS:
                d[k] = float(d[k])
            rows.append(BenchRow(**d))
        return cls(rows)

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls([BenchRow(**d) for d in json.loads(text)["rows"]])

    def write(self, path, fmt="csv"):
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w") as fh:
            fh.write(text)

    def find(self, **kw):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]


def item_shapes(config: BenchConfig) -> list:
    """``(dim, nnz_per_row, seed)`` for every generated item.

    Mixed configurations draw each item's ``dim`` and ``nnz_per_row``
    uniformly (inclusive) from the ranges; a range collapsed to one value
    yields exactly the fixed-size batch.
    """
    seeds = item_seeds(config.seed, config.batch_size)
    shape_rng = np.random.default_rng([config.seed, 1])
    d_lo, d_hi = _range(config.dim)
    z_lo, z_hi = _range(config.nnz_per_row)
    shapes = []
    for s in seeds:
        dim = int(shape_rng.integers(d_lo, d_hi + 1)) if d_lo != d_hi else d_lo
        hi = min(z_hi, dim)
        lo = min(z_lo, hi)
        nnz = int(shape_rng.integers(lo, hi + 1)) if lo != hi else hi
        shapes.append((dim, nnz, s))
    return shapes


def generate_batch(config: BenchConfig) -> list:
    """SparseTensor matrices for one configuration, deterministic in ``config.seed``."""
    if config.inputs:
        return [load_matrix_market(p, dtype=dtype_for(config.precision)) for p in config.inputs]
    return [
        random_sparse(dim, nnz, s, precision=config.precision)
        for dim, nnz, s in item_shapes(config)
    ]


def _dense_inputs(items, n_b, config):
    seeds = item_seeds(config.seed + 7919 * n_b, len(items))
    return [random_dense(a.cols, n_b, s, config.precision) for a, s in zip(items, seeds)]


def _time(fn, repeats):
    fn()  # untimed warm-up
    total = 0
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        total += time.perf_counter_ns() - t0
    # floor at one tick so FLOPS stays finite and recomputable
    return max(total / repeats, 1.0) / 1e9


def run_benchmark(config: BenchConfig, sink=None, fmt="csv") -> BenchReport:
    """Time every (algorithm, n_B, mode) combination and collect a report.

    Batched timings include building the per-item descriptor table. If
    ``sink`` is a path the report is also written there.
    """
    config.validate()
    st_items = generate_batch(config)
    csr_items = None
    total_nnz = sum(a.nnz for a in st_items)
    report = BenchReport()
    for algorithm in config.algorithms:
        if algorithm == "swa_csr":
            csr_items = csr_items or [coo_to_csr(a) for a in st_items]
            items = csr_items
        else:
            items = st_items
        for n_b in config.n_b_values:
            dense = _dense_inputs(st_items, n_b, config)
            req = BatchedSpmmRequest(SparseBatch(tuple(items), n_b), dense, algorithm)
            for mode in config.modes:
                counter = LaunchCounter()
                if mode == "batched":
                    plan = plan_for(
                        req,
                        scratchpad_budget_bytes=config.budget_bytes,
                        threads_per_block=config.threads_per_block,
                    )
                    batched_spmm(req, plan, counter=counter, workers=config.workers)
                    launches = counter.logical_launches
                    seconds = _time(
                        lambda: batched_spmm(req, plan, workers=config.workers), config.repeats
                    )
                    case, p, units, sub = plan.case, plan.p, len(plan.work_units), plan.subwarp
                else:
                    sequential_spmm(req, counter=counter)
                    launches = counter.logical_launches
                    seconds = _time(lambda: sequential_spmm(req), config.repeats)
                    case, p, units = "sequential", 1, len(items)
                    sub = compute_subwarp(n_b).width
                if algorithm == "baseline":
                    sub = 1
                report.rows.append(
                    BenchRow(
                        algorithm=algorithm,
                        batch_size=len(items),
                        dim_spec="file" if config.inputs else _spec(config.dim),
                        nnz_spec="file" if config.inputs else _spec(config.nnz_per_row),
                        n_b=n_b,
                        mean_seconds=seconds,
                        flops=flops(total_nnz, n_b, seconds),
                        launches=launches,
                        case=case,
                        p=p,
                        mode=mode,
                        total_nnz=total_nnz,
                        work_units=units,
                        subwarp=sub,
                    )
                )
    if sink is not None:
        report.write(sink, fmt)
    return report


def run_mixed_benchmark(config: BenchConfig, sink=None, fmt="csv") -> BenchReport:
    """Like :func:`run_benchmark`, with per-item sizes drawn from the ``dim``/``nnz_per_row`` ranges."""
    config = replace(config, dim=_range(config.dim), nnz_per_row=_range(config.nnz_per_row))
    return run_benchmark(config, sink=sink, fmt=fmt)


def explain_plan(config: BenchConfig, n_b: int, algorithm: str = "swa_st") -> dict:
    """The launch plan a batched run would use, without executing anything."""
    config.validate()
    if config.inputs:
        rows = [a.rows for a in generate_batch(config)]
    else:
        rows = [dim for dim, _, _ in item_shapes(config)]
    plan = plan_batch(
        PlanInput(
            layout=layout_of(algorithm),
            batch_rows=tuple(rows),
            dense_cols=n_b,
            element_bytes=dtype_for(config.precision).itemsize,
            scratchpad_budget_bytes=config.budget_bytes,
            threads_per_block=config.threads_per_block,
        )
    )
    return {"algorithm": algorithm, **plan.to_dict()}
