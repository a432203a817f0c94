import numpy as np
import pytest

from batchspmm import (
    CsrMatrix,
    LaneGroup,
    ParameterError,
    Scratchpad,
    ScratchpadOverflow,
    ShapeError,
    SparseTensorMatrix,
    WriteTrace,
    coo_to_csr,
    csr_to_coo,
    gemm_oracle,
    random_dense,
    random_sparse,
    spmm_baseline,
    spmm_grad_dense,
    spmm_grad_values,
    spmm_swa_csr,
    spmm_swa_st,
)
from batchspmm.planner import compute_subwarp

from .conftest import central_diff, max_rel_error

EYE3_ST = SparseTensorMatrix(3, 3, [0, 0, 1, 1, 2, 2], [1.0, 1.0, 1.0])
B32 = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.float32)


def naive_triple_loop(a_dense, b):
    """Independent pure-Python reference for small cases."""
    m, k = a_dense.shape
    n = b.shape[1]
    return np.array(
        [[sum(float(a_dense[i, t]) * float(b[t, j]) for t in range(k)) for j in range(n)] for i in range(m)]
    )


def test_lane_group_widths():
    for w in (1, 2, 4, 8, 16, 32):
        LaneGroup(w)
    for w in (0, 3, 64):
        with pytest.raises(ParameterError):
            LaneGroup(w)


@pytest.mark.parametrize("width, n", [(1, 5), (4, 10), (8, 8), (32, 100), (16, 3)])
def test_lane_columns_partition_row(width, n):
    g = LaneGroup(width)
    cols = sorted(j for lane in range(width) for j in g.lane_columns(lane, n))
    assert cols == list(range(n))
    # lockstep step t gives lane l column t * width + l
    for t, (s, e) in enumerate(g.steps(n)):
        for lane in range(e - s):
            assert s + lane == list(g.lane_columns(lane, n))[t]


def test_scratchpad_budget():
    pad = Scratchpad(64)
    buf = pad.allocate(4, 4, np.float32)
    assert buf.shape == (4, 4) and not buf.any()
    with pytest.raises(ScratchpadOverflow):
        pad.allocate(1, 1, np.float32)


def test_gemm_oracle_trivial():
    b = np.array([[1.5, -2.0], [3.0, 4.0]], dtype=np.float32)
    np.testing.assert_array_equal(gemm_oracle(np.eye(2), b), b)
    np.testing.assert_array_equal(gemm_oracle(np.zeros((2, 2)), b), np.zeros((2, 2)))
    assert gemm_oracle([[2.0]], np.array([[3.0]])).tolist() == [[6.0]]
    with pytest.raises(ShapeError):
        gemm_oracle(np.eye(2), np.ones((3, 1)))


def test_gemm_oracle_matches_triple_loop():
    a = random_sparse(7, 3, seed=4).to_dense()
    b = random_dense(7, 5, seed=2, precision="double")
    np.testing.assert_allclose(gemm_oracle(a, b), naive_triple_loop(a, b), rtol=1e-12)


@pytest.mark.parametrize("kernel", ["baseline", "swa_st", "swa_csr"])
def test_identity(kernel):
    if kernel == "baseline":
        c = spmm_baseline(EYE3_ST, B32)
    elif kernel == "swa_st":
        c = spmm_swa_st(EYE3_ST, B32, LaneGroup(2))
    else:
        c = spmm_swa_csr(coo_to_csr(EYE3_ST), B32, LaneGroup(2))
    np.testing.assert_array_equal(c, B32)


def test_single_entry_hand_case():
    a = SparseTensorMatrix(2, 2, [0, 1], [2.0])
    b = np.array([[1, 2], [3, 4]], dtype=np.float32)
    expected = naive_triple_loop(a.to_dense(), b)
    assert expected.tolist() == [[6, 8], [0, 0]]
    for c in (spmm_baseline(a, b), spmm_swa_st(a, b, 2), spmm_swa_csr(coo_to_csr(a), b, 2)):
        np.testing.assert_array_equal(c, expected)


def test_baseline_random_vs_oracle():
    a = random_sparse(50, 3, seed=7)
    b = random_dense(50, 64, seed=70)
    assert max_rel_error(spmm_baseline(a, b), gemm_oracle(a.to_dense(), b)) <= 1e-5


def test_swa_st_wide_vs_oracle():
    a = random_sparse(64, 3, seed=1)
    b = random_dense(64, 512, seed=10)
    c = spmm_swa_st(a, b, LaneGroup(32))
    assert max_rel_error(c, gemm_oracle(a.to_dense(), b)) <= 1e-5


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("n_b", [1, 3, 16, 40])
def test_swa_st_bit_exact_with_baseline(seed, n_b):
    a = random_sparse(24, 1 + seed % 5, seed=seed)
    b = random_dense(24, n_b, seed=seed + 100)
    np.testing.assert_array_equal(spmm_swa_st(a, b, compute_subwarp(n_b)), spmm_baseline(a, b))


@pytest.mark.parametrize("seed", range(8))
def test_swa_csr_close_to_baseline(seed):
    csr = coo_to_csr(random_sparse(32, 5, seed=seed))
    b = random_dense(32, 64, seed=seed + 1)
    c = spmm_swa_csr(csr, b, LaneGroup(32))
    assert max_rel_error(c, spmm_baseline(csr_to_coo(csr), b)) <= 1e-6


def test_swa_csr_empty_row():
    a = CsrMatrix(3, 3, [0, 1, 1, 2], [2, 0], [1.5, 2.0])
    b = random_dense(3, 4, seed=0)
    c = spmm_swa_csr(a, b, LaneGroup(4))
    assert not c[1].any()
    np.testing.assert_allclose(c, gemm_oracle(a.to_dense(), b))


def test_zero_nnz_gives_zero():
    a = SparseTensorMatrix(4, 3, [], [])
    b = random_dense(3, 5, seed=0)
    assert not spmm_baseline(a, b).any()
    assert not spmm_swa_csr(coo_to_csr(a), b, 8).any()


def test_shape_errors():
    a = random_sparse(4, 2, seed=0)
    b = np.ones((5, 2), dtype=np.float32)
    with pytest.raises(ShapeError):
        spmm_baseline(a, b)
    with pytest.raises(ShapeError):
        spmm_swa_st(a, b, 2)
    with pytest.raises(ShapeError):
        spmm_swa_csr(coo_to_csr(a), b, 2)


def test_csr_race_freedom_and_st_races():
    a = random_sparse(40, 4, seed=9)
    b = random_dense(40, 24, seed=1)
    trace = WriteTrace((40, 24))
    spmm_swa_csr(coo_to_csr(a), b, LaneGroup(32), trace=trace)
    assert trace.max_writers() == 1
    # one lane group per nonzero: rows with several nonzeros see several writers
    trace = WriteTrace((40, 24))
    spmm_swa_st(a, b, LaneGroup(32), trace=trace)
    assert trace.max_writers() == 4


def test_linearity():
    a = coo_to_csr(random_sparse(32, 3, seed=5))
    b1 = random_dense(32, 16, seed=1)
    b2 = random_dense(32, 16, seed=2)
    lhs = spmm_swa_csr(a, b1 + b2, 16)
    rhs = spmm_swa_csr(a, b1, 16) + spmm_swa_csr(a, b2, 16)
    assert max_rel_error(lhs, rhs) <= 1e-5


def test_double_precision_kernels():
    a = random_sparse(16, 3, seed=2).astype(np.float64)
    b = random_dense(16, 8, seed=3, precision="double")
    c = spmm_swa_st(a, b, 8)
    assert c.dtype == np.float64
    assert max_rel_error(c, gemm_oracle(a.to_dense(), b)) <= 1e-12


# backward


def test_grad_dense_identity():
    eye = coo_to_csr(EYE3_ST)
    g = random_dense(3, 4, seed=0)
    np.testing.assert_array_equal(spmm_grad_dense(eye, g), g)


def test_grad_dense_single_entry():
    a = CsrMatrix(2, 2, [0, 1, 1], [1], [2.0])
    g = np.array([[1, 1], [0, 0]], dtype=np.float32)
    expected = gemm_oracle(a.to_dense().T, g)
    assert expected.tolist() == [[0, 0], [2, 2]]
    np.testing.assert_array_equal(spmm_grad_dense(a, g), expected)


def test_grad_dense_finite_difference():
    a = coo_to_csr(random_sparse(5, 2, seed=3)).astype(np.float64)
    b0 = random_dense(5, 3, seed=4, precision="double")
    grad = spmm_grad_dense(a, np.ones((5, 3)))
    fd = central_diff(lambda b: spmm_swa_csr(a, b, 4).sum(), b0, h=1e-3)
    np.testing.assert_allclose(grad, fd, atol=1e-2)


def test_grad_values_zero():
    a = coo_to_csr(random_sparse(6, 2, seed=1))
    g = spmm_grad_values(a, random_dense(6, 3, seed=0), np.zeros((6, 3), np.float32))
    assert g.shape == (12,) and not g.any()


def test_grad_values_identity_case():
    eye = CsrMatrix(2, 2, [0, 1, 2], [0, 1], [1.0, 1.0])
    b = np.array([[1, 2], [3, 4]], dtype=np.float32)
    g = spmm_grad_values(eye, b, np.eye(2, dtype=np.float32))
    # d/da_k of sum(grad_C * (A @ B)), evaluated densely
    dense = (np.eye(2) @ b.T)
    assert g.tolist() == [dense[0, 0], dense[1, 1]] == [1, 4]


def test_grad_values_finite_difference():
    pattern = coo_to_csr(random_sparse(5, 2, seed=6)).astype(np.float64)
    b = random_dense(5, 3, seed=1, precision="double")
    w = random_dense(5, 3, seed=2, precision="double", low=-1)

    def loss(vals):
        a = CsrMatrix(5, 5, pattern.rpt, pattern.colids, vals)
        return float((spmm_swa_csr(a, b, 4) * w).sum())

    fd = central_diff(loss, pattern.values, h=1e-3)
    np.testing.assert_allclose(spmm_grad_values(pattern, b, w), fd, atol=1e-2)


def test_grad_shape_errors():
    a = coo_to_csr(random_sparse(4, 2, seed=0))
    with pytest.raises(ShapeError):
        spmm_grad_dense(a, np.ones((3, 2)))
    with pytest.raises(ShapeError):
        spmm_grad_values(a, np.ones((4, 2)), np.ones((4, 3)))
