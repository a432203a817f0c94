"""Graph convolution layer ``Y[b] = sum_ch A[b][ch] @ (X[b] @ W[ch] + bias[ch])``.

Two forward paths compute the same function:

* :func:`graph_convolution_naive` loops over items and channels, issuing a
  MatMul, an Add and an SpMM launch per ``(item, channel)`` pair plus one
  accumulation launch per item.
* :func:`graph_convolution_batched` views the features as one stacked
  ``(m_X * batchsize) x n_X`` matrix and issues one MatMul, one Add and one
  batched SpMM per channel plus a single accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import BatchedSpmmRequest, LaunchCounter, batched_spmm_stacked, plan_for
from .errors import ParameterError, ShapeError
from .kernels import spmm_baseline, spmm_swa_csr, spmm_swa_st
from .matrices import CsrMatrix, SparseBatch, SparseTensorMatrix, coo_to_csr, csr_to_coo
from .planner import compute_subwarp

__all__ = [
    "GraphConvInputs",
    "GraphConvGrads",
    "graph_convolution_naive",
    "graph_convolution_batched",
    "graph_convolution_backward",
]


@dataclass(frozen=True)
class GraphConvInputs:
    """Layer inputs.

    adjacency
        ``adjacency[b][ch]`` is the ``m_X x m_X`` sparse matrix of item ``b``
        for channel ``ch``. The same object may be reused across channels.
    features
        ``(batchsize, m_X, n_X)`` array.
    weights
        ``(channel, n_X, n_W)`` array.
    bias
        ``(channel, n_W)`` array, broadcast over the rows of each product.
    """

    adjacency: tuple
    features: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        adj = tuple(tuple(row) for row in self.adjacency)
        object.__setattr__(self, "adjacency", adj)
        x = np.ascontiguousarray(self.features)
        w = np.asarray(self.weights)
        bias = np.asarray(self.bias)
        if x.ndim != 3:
            raise ShapeError(f"features must be (batchsize, m_X, n_X), got {x.shape}")
        if w.ndim != 3:
            raise ShapeError(f"weights must be (channel, n_X, n_W), got {w.shape}")
        batchsize, m_x, n_x = x.shape
        channel = w.shape[0]
        if w.shape[1] != n_x:
            raise ShapeError(f"weights expect n_X={w.shape[1]}, features have {n_x}")
        if bias.shape != (channel, w.shape[2]):
            raise ShapeError(f"bias must be {(channel, w.shape[2])}, got {bias.shape}")
        if len(adj) != batchsize or any(len(row) != channel for row in adj):
            raise ShapeError(f"adjacency must be {batchsize} items x {channel} channels")
        for b, row in enumerate(adj):
            for ch, a in enumerate(row):
                if a.shape != (m_x, m_x):
                    raise ShapeError(f"A[{b}][{ch}] is {a.shape}, expected {(m_x, m_x)}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", bias)

    @property
    def batchsize(self) -> int:
        return self.features.shape[0]

    @property
    def channel(self) -> int:
        return self.weights.shape[0]

    @property
    def nodes(self) -> int:
        return self.features.shape[1]

    def stacked_features(self) -> np.ndarray:
        """``(m_X * batchsize) x n_X`` view of the features; never copies."""
        bs, m, n = self.features.shape
        xr = self.features.view()
        xr.shape = (bs * m, n)  # raises instead of copying if a view is impossible
        return xr


@dataclass
class GraphConvGrads:
    x: np.ndarray
    w: np.ndarray
    bias: np.ndarray


def _spmm_single(a, b, algorithm):
    if algorithm == "swa_csr":
        a = a if isinstance(a, CsrMatrix) else coo_to_csr(a)
        return spmm_swa_csr(a, b, compute_subwarp(b.shape[1]))
    a = a if isinstance(a, SparseTensorMatrix) else csr_to_coo(a)
    if algorithm == "baseline":
        return spmm_baseline(a, b)
    if algorithm == "swa_st":
        return spmm_swa_st(a, b, compute_subwarp(b.shape[1]))
    raise ParameterError(f"unknown algorithm {algorithm!r}")


def graph_convolution_naive(inputs: GraphConvInputs, *, algorithm="swa_st", counter=None):
    """Per-item, per-channel forward pass. Returns a list of ``Y[b]``."""
    counter = counter if counter is not None else LaunchCounter()
    x, w, bias = inputs.features, inputs.weights, inputs.bias
    ys = []
    for b in range(inputs.batchsize):
        parts = []
        for ch in range(inputs.channel):
            u = x[b] @ w[ch]
            counter.launch()
            bb = u + bias[ch]
            counter.launch()
            parts.append(_spmm_single(inputs.adjacency[b][ch], bb, algorithm))
            counter.launch(2 if algorithm == "baseline" else 1)
        ys.append(_accumulate(parts))
        counter.launch()
    return ys


def _accumulate(parts):
    total = parts[0].copy()
    for p in parts[1:]:
        total += p
    return total


def _channel_request(inputs, ch, dense, algorithm, transpose_cache=None):
    items = [inputs.adjacency[b][ch] for b in range(inputs.batchsize)]
    if transpose_cache is not None:
        items = [transpose_cache(a) for a in items]
    return BatchedSpmmRequest(SparseBatch(tuple(items), dense.shape[1]), dense, algorithm)


def graph_convolution_batched(
    inputs: GraphConvInputs, *, algorithm="swa_st", counter=None, workers=1, plan_kwargs=None,
) -> np.ndarray:
    """Batched forward pass. Returns the stacked ``(m_X * batchsize) x n_W`` output."""
    counter = counter if counter is not None else LaunchCounter()
    plan_kwargs = plan_kwargs or {}
    xr = inputs.stacked_features()
    parts = []
    for ch in range(inputs.channel):
        u = xr @ inputs.weights[ch]
        counter.launch()
        bb = u + inputs.bias[ch]
        counter.launch()
        req = _channel_request(inputs, ch, bb, algorithm)
        stacked, _ = batched_spmm_stacked(
            req, plan_for(req, **plan_kwargs), counter=counter, workers=workers
        )
        parts.append(stacked)
    y = _accumulate(parts)
    counter.launch()
    return y


def unstack(y: np.ndarray, batchsize: int) -> list:
    m = y.shape[0] // batchsize
    return [y[i * m:(i + 1) * m] for i in range(batchsize)]


class _TransposeCache:
    """Transposed CSR per distinct adjacency object, built once per call."""

    def __init__(self):
        self._seen = {}

    def __call__(self, a):
        key = id(a)
        if key not in self._seen:
            csr = a if isinstance(a, CsrMatrix) else coo_to_csr(a)
            self._seen[key] = (a, csr.transpose())
        return self._seen[key][1]


def graph_convolution_backward(
    inputs: GraphConvInputs, grad_y, *, counter=None, workers=1, plan_kwargs=None,
) -> GraphConvGrads:
    """Gradients of the layer for an upstream gradient ``grad_y``.

    ``grad_y`` may be stacked ``(m_X * batchsize) x n_W`` or a sequence of
    per-item ``m_X x n_W`` arrays. The adjoint SpMM ``A[b][ch].T @ grad_Y[b]``
    runs as one batched CSR launch per channel.
    """
    counter = counter if counter is not None else LaunchCounter()
    plan_kwargs = plan_kwargs or {}
    bs, m, n_x = inputs.features.shape
    n_w = inputs.weights.shape[2]
    if isinstance(grad_y, np.ndarray) and grad_y.ndim == 2:
        gy = grad_y
    else:
        gy = np.concatenate([np.asarray(g) for g in grad_y], axis=0)
    if gy.shape != (bs * m, n_w):
        raise ShapeError(f"grad_y must be {(bs * m, n_w)} stacked, got {gy.shape}")

    xr = inputs.stacked_features()
    transposes = _TransposeCache()
    grad_x = np.zeros_like(xr)
    grad_w = np.zeros_like(inputs.weights)
    grad_bias = np.zeros_like(inputs.bias)
    for ch in range(inputs.channel):
        req = _channel_request(inputs, ch, gy, "swa_csr", transpose_cache=transposes)
        grad_b, _ = batched_spmm_stacked(
            req, plan_for(req, **plan_kwargs), counter=counter, workers=workers
        )
        grad_w[ch] = xr.T @ grad_b
        grad_bias[ch] = grad_b.sum(axis=0)
        grad_x += grad_b @ inputs.weights[ch].T
        counter.launch(3)
    return GraphConvGrads(grad_x.reshape(bs, m, n_x), grad_w, grad_bias)
