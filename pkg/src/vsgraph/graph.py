"""Cosine kNN visual graph and its symmetric normalized propagation operator.

The graph joins i and j when either is among the other's k most similar
samples. Edge weights are cosine similarities clamped to [0, 1]; ranking
uses the raw cosine, with ties going to the lower node index.

The operator is ``S = D^-1/2 (A + w I) D^-1/2`` where ``D`` holds the row
sums of ``A`` alone. A node with zero degree uses 1 in place of its degree.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, FormatError, LengthError, MatrixWriteError, ShapeError, ValidationError

GRAPH_MAGIC = b"VSGG"
GRAPH_VERSION = 1
KIND_GRAPH = 0
KIND_OPERATOR = 1
_HEADER = struct.Struct("<4sIIQQ")


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


@dataclass(frozen=True, eq=False)
class SparseGraph:
    node_count: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def row_degree_counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights, self.indices, self.indptr), shape=(self.node_count, self.node_count)
        )

    def dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def degree(self) -> np.ndarray:
        """Row sums of A, accumulated in column order."""
        out = np.zeros(self.node_count)
        for i in range(self.node_count):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i] = self.weights[lo:hi].sum()
        return out


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    node_count: int
    self_weight: float
    degree: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.node_count, self.node_count)
        )

    def dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


def _csr_from_coo(n, rows, cols, vals):
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(np.int64), vals


def graph_from_edges(n, rows, cols, weights) -> SparseGraph:
    """Build a graph from a directed edge list that already contains both directions."""
    indptr, indices, data = _csr_from_coo(
        n, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
        np.asarray(weights, dtype=np.float64),
    )
    _freeze(indptr, indices, data)
    return SparseGraph(n, indptr, indices, data)


def unit_rows(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {x.shape}")
    norms = np.sqrt((x * x).sum(axis=1))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValidationError(f"feature row {int(zero[0])} has zero norm")
    return x / norms[:, None]


def knn_neighbors(unit, k, block_size=512) -> np.ndarray:
    """Indices of each row's k most cosine-similar other rows, shape (N, k).

    Exhaustive search; ordering within a row is by descending similarity and
    then ascending index.
    """
    n = unit.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        sims = unit[start:stop] @ unit.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on -cos keeps lower index first among equal scores
        out[start:stop] = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    return out


def knn_graph(features, k: int, block_size: int = 512) -> SparseGraph:
    unit = unit_rows(features)
    n = unit.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1 or k >= n:
        raise ArgumentError(f"k must satisfy 1 <= k < {n}, got {k}")
    nbrs = knn_neighbors(unit, int(k), block_size)

    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = nbrs.ravel()
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    pairs = np.unique(lo * n + hi)
    a, b = pairs // n, pairs % n
    # one canonical product per undirected pair keeps A exactly symmetric
    cos = (unit[a] * unit[b]).sum(axis=1)
    w = np.clip(cos, 0.0, 1.0)
    return graph_from_edges(
        n, np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([w, w])
    )


def normalize(graph: SparseGraph, w: float = 0.0) -> PropagationOperator:
    w = float(w)
    if not w >= 0:
        raise ArgumentError(f"self weight must be nonnegative, got {w}")
    n = graph.node_count
    degree = graph.degree()
    guarded = np.where(degree == 0, 1.0, degree)
    inv_sqrt = 1.0 / np.sqrt(guarded)

    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(graph.indptr))
    cols = graph.indices
    vals = graph.weights.astype(np.float64)
    if w > 0:
        diag = np.arange(n, dtype=np.int64)
        rows = np.concatenate([rows, diag])
        cols = np.concatenate([cols, diag])
        vals = np.concatenate([vals, np.full(n, w)])
    # scale by the product inv_sqrt[i]*inv_sqrt[j], which is symmetric bit-for-bit
    data = vals * (inv_sqrt[rows] * inv_sqrt[cols])
    indptr, indices, data = _csr_from_coo(n, rows, cols, data)
    degree = degree.copy()
    _freeze(indptr, indices, data, degree)
    return PropagationOperator(n, w, degree, indptr, indices, data)


def propagate(operator: PropagationOperator, signal) -> np.ndarray:
    """Return ``S @ signal`` in float64."""
    x = np.asarray(signal, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != operator.node_count:
        raise ShapeError(
            f"signal has shape {np.shape(signal)}, operator has {operator.node_count} nodes"
        )
    out = operator.to_scipy() @ np.ascontiguousarray(x)
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------- persistence


def _pack(kind, n, indptr, indices, values):
    return b"".join([
        _HEADER.pack(GRAPH_MAGIC, GRAPH_VERSION, kind, n, indices.size),
        indptr.astype("<u8").tobytes(),
        indices.astype("<u8").tobytes(),
        values.astype("<f4").tobytes(),
    ])


def _write(path, blob):
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise MatrixWriteError(path, exc) from exc


def save_graph(graph: SparseGraph, destination) -> None:
    _write(destination, _pack(KIND_GRAPH, graph.node_count, graph.indptr, graph.indices, graph.weights))


def save_operator(op: PropagationOperator, destination) -> None:
    blob = _pack(KIND_OPERATOR, op.node_count, op.indptr, op.indices, op.data)
    blob += struct.pack("<d", op.self_weight) + op.degree.astype("<f4").tobytes()
    _write(destination, blob)


def _read(source, want_kind):
    with open(source, "rb") as fh:
        raw = fh.read()
    if raw[:4] != GRAPH_MAGIC:
        raise FormatError(f"{source}: bad magic {raw[:4]!r}, expected {GRAPH_MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise LengthError(f"{source}: truncated header")
    _, version, kind, n, nnz = _HEADER.unpack_from(raw)
    if version != GRAPH_VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if kind != want_kind:
        raise FormatError(f"{source}: container kind {kind}, expected {want_kind}")
    body = (n + 1) * 8 + nnz * 8 + nnz * 4
    extra = 8 + n * 4 if kind == KIND_OPERATOR else 0
    if len(raw) != _HEADER.size + body + extra:
        raise LengthError(f"{source}: size {len(raw)} does not match n={n}, nnz={nnz}")
    off = _HEADER.size
    indptr = np.frombuffer(raw, "<u8", n + 1, off).astype(np.int64)
    off += (n + 1) * 8
    indices = np.frombuffer(raw, "<u8", nnz, off).astype(np.int64)
    off += nnz * 8
    values = np.frombuffer(raw, "<f4", nnz, off).astype(np.float64)
    off += nnz * 4
    if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr) < 0):
        raise FormatError(f"{source}: malformed row offsets")
    if nnz and indices.max() >= n:
        raise FormatError(f"{source}: column index out of range")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{source}: non-finite edge value")
    tail = None
    if kind == KIND_OPERATOR:
        (w,) = struct.unpack_from("<d", raw, off)
        degree = np.frombuffer(raw, "<f4", n, off + 8).astype(np.float64)
        tail = (w, degree)
    return int(n), indptr, indices, values, tail


def load_graph(source) -> SparseGraph:
    n, indptr, indices, values, _ = _read(source, KIND_GRAPH)
    _freeze(indptr, indices, values)
    return SparseGraph(n, indptr, indices, values)


def load_operator(source) -> PropagationOperator:
    n, indptr, indices, values, (w, degree) = _read(source, KIND_OPERATOR)
    _freeze(indptr, indices, values, degree)
    return PropagationOperator(n, w, degree, indptr, indices, values)
