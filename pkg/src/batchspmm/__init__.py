"""Batched sparse-dense matrix multiplication on an emulated GPU thread model."""

from .engine import (
    ALGORITHMS,
    BatchedSpmmRequest,
    LaunchCounter,
    batched_spmm,
    copy_pointer_table,
    plan_for,
    sequential_spmm,
)
from .errors import (
    FormatError,
    MatrixMarketError,
    ParameterError,
    PlanError,
    ScratchpadOverflow,
    ShapeError,
    SpmmError,
)
from .graphconv import (
    GraphConvInputs,
    graph_convolution_backward,
    graph_convolution_batched,
    graph_convolution_naive,
)
from .kernels import (
    LaneGroup,
    Scratchpad,
    WriteTrace,
    gemm_oracle,
    spmm_baseline,
    spmm_grad_dense,
    spmm_grad_values,
    spmm_swa_csr,
    spmm_swa_st,
)
from .matrices import (
    CsrMatrix,
    SparseBatch,
    SparseTensorMatrix,
    coo_to_csr,
    csr_to_coo,
    random_dense,
    random_sparse,
)
from .mmio import load_matrix_market, write_matrix_market
from .planner import (
    LaunchPlan,
    PlanInput,
    compute_subwarp,
    plan_batch,
    plan_batch_csr,
    plan_batch_st,
    scratch_bytes,
)

__version__ = "0.1.0"
