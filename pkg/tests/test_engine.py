import numpy as np
import pytest

from batchspmm import (
    BatchedSpmmRequest,
    LaunchCounter,
    PlanError,
    PlanInput,
    ShapeError,
    SparseBatch,
    SparseTensorMatrix,
    batched_spmm,
    coo_to_csr,
    copy_pointer_table,
    gemm_oracle,
    plan_batch,
    plan_for,
    random_dense,
    random_sparse,
    sequential_spmm,
)
from batchspmm.engine import batched_spmm_stacked
from batchspmm.planner import COLUMN_BLOCKED, NO_SCRATCHPAD

from .conftest import max_rel_error

ALGOS = ["baseline", "swa_st", "swa_csr"]


def make_request(algorithm, dims, nnzs, n_b, seed=0, stacked=False):
    items = [random_sparse(d, z, seed=seed + i) for i, (d, z) in enumerate(zip(dims, nnzs))]
    dense = [random_dense(d, n_b, seed=1000 + seed + i) for i, d in enumerate(dims)]
    if stacked:
        dense = np.concatenate(dense)
    return BatchedSpmmRequest(SparseBatch(tuple(items), n_b), dense, algorithm), items


@pytest.mark.parametrize("algorithm", ALGOS)
def test_identity_batch_shared_dense(algorithm):
    eye = SparseTensorMatrix(3, 3, [0, 0, 1, 1, 2, 2], [1.0, 1.0, 1.0])
    b = random_dense(9, 4, seed=1)
    req = BatchedSpmmRequest(SparseBatch((eye,) * 3, 4), b, algorithm)
    outs = batched_spmm(req, plan_for(req))
    for i, out in enumerate(outs):
        np.testing.assert_array_equal(out, b[3 * i:3 * i + 3])


@pytest.mark.parametrize("algorithm", ALGOS)
def test_batch_of_100_vs_oracle(algorithm):
    req, items = make_request(algorithm, [50] * 100, [3] * 100, 512)
    counter = LaunchCounter()
    outs = batched_spmm(req, plan_for(req), counter=counter)
    assert counter.logical_launches == 1
    for a, b, out in zip(items, req.dense, outs):
        assert max_rel_error(out, gemm_oracle(a.to_dense(), b)) <= 1e-5


@pytest.mark.parametrize("algorithm", ALGOS)
def test_mixed_batch_vs_oracle(algorithm):
    rng = np.random.default_rng(3)
    dims = rng.integers(32, 257, size=30).tolist()
    nnzs = rng.integers(1, 6, size=30).tolist()
    req, items = make_request(algorithm, dims, nnzs, 96, seed=40)
    outs = batched_spmm(req, plan_for(req))
    for a, b, out in zip(items, req.dense, outs):
        assert max_rel_error(out, gemm_oracle(a.to_dense(), b)) <= 1e-5


@pytest.mark.parametrize("algorithm", ALGOS)
def test_sequential_launch_counts(algorithm):
    req, _ = make_request(algorithm, [20] * 100, [2] * 100, 8)
    counter = LaunchCounter()
    sequential_spmm(req, counter=counter)
    assert counter.logical_launches == (200 if algorithm == "baseline" else 100)


@pytest.mark.parametrize("algorithm", ALGOS)
def test_batch_of_one_matches(algorithm):
    req, _ = make_request(algorithm, [17], [4], 33)
    np.testing.assert_allclose(
        batched_spmm(req, plan_for(req))[0], sequential_spmm(req)[0], rtol=1e-6
    )


@pytest.mark.parametrize("algorithm", ALGOS)
@pytest.mark.parametrize("budget", [32768, 2048, 64])
def test_batched_equals_sequential_across_cases(algorithm, budget):
    req, _ = make_request(algorithm, [40, 12, 64, 33], [3, 1, 5, 2], 200, seed=9)
    plan = plan_for(req, scratchpad_budget_bytes=budget)
    if budget == 64 and algorithm != "swa_csr":
        assert plan.case == NO_SCRATCHPAD
    if budget == 2048:
        assert plan.case == COLUMN_BLOCKED
    counter = LaunchCounter()
    outs = batched_spmm(req, plan, counter=counter)
    assert counter.logical_launches == 1
    assert counter.work_units_executed == len(plan.work_units)
    for got, ref in zip(outs, sequential_spmm(req)):
        assert max_rel_error(got, ref) <= 1e-6


def test_st_batched_is_bit_exact_with_sequential():
    req, _ = make_request("swa_st", [50] * 10, [3] * 10, 256)
    plan = plan_for(req)
    assert plan.p == 2
    for got, ref in zip(batched_spmm(req, plan), sequential_spmm(req)):
        np.testing.assert_array_equal(got, ref)


def test_parallel_pool_is_deterministic():
    req, _ = make_request("swa_csr", [50] * 20, [3] * 20, 128)
    plan = plan_for(req, scratchpad_budget_bytes=1024)
    first, _ = batched_spmm_stacked(req, plan, workers=4)
    second, _ = batched_spmm_stacked(req, plan, workers=4)
    serial, _ = batched_spmm_stacked(req, plan, workers=1)
    assert first.tobytes() == second.tobytes() == serial.tobytes()


@pytest.mark.parametrize("algorithm", ["swa_st", "swa_csr"])
def test_work_units_write_disjoint_regions(algorithm):
    req, _ = make_request(algorithm, [30, 70, 5], [2, 4, 1], 300, seed=2)
    plan = plan_for(req, scratchpad_budget_bytes=4096)
    traces = []
    batched_spmm(req, plan, traces=traces)
    for trace, a in zip(traces, req.batch.items):
        assert trace.max_writers() == 1
        assert (trace.owner >= 0).all()  # every entry covered


def test_stacked_output_is_contiguous():
    req, _ = make_request("swa_csr", [4, 6], [1, 2], 5)
    stacked, views = batched_spmm_stacked(req, plan_for(req))
    assert stacked.shape == (10, 5)
    assert all(np.shares_memory(v, stacked) for v in views)


def test_plan_mismatch_rejected():
    req, _ = make_request("swa_csr", [10, 10], [2, 2], 8)
    other, _ = make_request("swa_csr", [10, 11], [2, 2], 8)
    with pytest.raises(PlanError):
        batched_spmm(req, plan_for(other))
    st_req, _ = make_request("swa_st", [10, 10], [2, 2], 8)
    with pytest.raises(PlanError):
        batched_spmm(req, plan_for(st_req))
    with pytest.raises(PlanError):
        batched_spmm(req, plan_batch(PlanInput("csr", (10, 10), 16)))


def test_request_shape_checks():
    items = (random_sparse(4, 2, seed=0), random_sparse(5, 2, seed=1))
    with pytest.raises(ShapeError):
        BatchedSpmmRequest(SparseBatch(items, 3), np.ones((8, 3), np.float32))
    with pytest.raises(ShapeError):
        BatchedSpmmRequest(SparseBatch(items, 3), [np.ones((4, 3), np.float32)])
    with pytest.raises(ShapeError):
        BatchedSpmmRequest(SparseBatch(items, 3), [np.ones((4, 3)), np.ones((5, 2))])


def test_request_converts_layout():
    req, _ = make_request("swa_csr", [6], [2], 4)
    assert req.batch.layout == "csr"
    csr_items = tuple(coo_to_csr(random_sparse(6, 2, seed=0)) for _ in range(1))
    st_req = BatchedSpmmRequest(SparseBatch(csr_items, 4), [random_dense(6, 4, 0)], "swa_st")
    assert st_req.batch.layout == "sparse_tensor"


def test_pointer_table():
    req, items = make_request("swa_st", [5, 7, 3], [2, 3, 1], 4)
    table = copy_pointer_table(req)
    assert len(table) == 3
    table.validate()
    e = table.entries
    assert e["nnz"].tolist() == [10, 21, 3]
    assert e["sparse_offset"].tolist() == [0, 10, 31]
    assert e["dense_offset"].tolist() == [0, 20, 48]
    assert e["out_offset"].tolist() == [0, 20, 48]
    broken = e.copy()
    broken["dense_offset"][2] = 47
    with pytest.raises(PlanError):
        type(table)(broken, 4).validate()
