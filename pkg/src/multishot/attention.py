"""Numerically stable dense attention with arbitrary boolean masks.

This is the correctness oracle for the specialized attention paths: plain
scaled dot-product attention in which a boolean mask marks which keys each
query may attend to. Also fixes the FLOP-counting convention used by the
benchmarks (the two matrix products only; softmax and scaling excluded).
"""

from __future__ import annotations

import numpy as np

from .errors import (
    EmptyAttentionRowError,
    EmptyInputError,
    NonFiniteInputError,
    ShapeMismatchError,
)


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.issubdtype(m.dtype, np.floating):
        m = m.astype(np.float64)
    if not np.all(np.isfinite(m)):
        raise NonFiniteInputError(f"{name} contains NaN or infinite values")
    return m


def stable_softmax(scores) -> np.ndarray:
    """Softmax of a 1-D score vector, computed with max-subtraction.

    Large inputs never overflow; the output is non-negative and sums to 1.
    """
    x = np.asarray(scores)
    if x.ndim != 1:
        raise ShapeMismatchError(f"scores must be 1-D, got shape {x.shape}")
    if x.size == 0:
        raise EmptyInputError("softmax of an empty vector")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("scores contain NaN or infinite values")
    e = np.exp(x - x.max())
    return e / e.sum()


def _attend(q, k, v, scale: float) -> np.ndarray:
    """Unvalidated softmax attention kernel over one contiguous segment."""
    scores = (q @ k.T) * scale
    w = np.exp(scores - scores.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return w @ v


def masked_dense_attention(q, k, v, mask, scale: float) -> np.ndarray:
    """Scaled dot-product attention restricted to the keys ``mask`` allows.

    ``out[i] = sum_j softmax_j(scale * q[i] . k[j] over allowed j) * v[j]``;
    every output row is a convex combination of the allowed rows of ``v``.
    A fully-masked query row is an error, not a silent zero: every pattern
    this library builds guarantees each query at least its own shot's keys,
    so an empty row indicates a plan or mask bug.
    """
    q = _as_matrix(q, "Q")
    k = _as_matrix(k, "K")
    v = _as_matrix(v, "V")
    m = np.asarray(mask)
    if m.ndim != 2 or m.dtype != np.bool_:
        raise ShapeMismatchError(f"mask must be a 2-D boolean array, got {m.dtype} {m.shape}")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError(f"Q cols {q.shape[1]} != K cols {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeMismatchError(f"K rows {k.shape[0]} != V rows {v.shape[0]}")
    if m.shape != (q.shape[0], k.shape[0]):
        raise ShapeMismatchError(
            f"mask shape {m.shape} != (Q rows, K rows) = ({q.shape[0]}, {k.shape[0]})"
        )
    if not m.any(axis=1).all():
        empty = int(np.flatnonzero(~m.any(axis=1))[0])
        raise EmptyAttentionRowError(f"query row {empty} has no allowed keys")

    scores = (q @ k.T) * scale
    scores = np.where(m, scores, -np.inf)
    # Row max is finite (>= 1 allowed key), so exp(-inf - max) underflows to 0.
    w = np.exp(scores - scores.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return w @ v


def dense_attention(q, k, v, scale: float, row_chunk: int | None = None) -> np.ndarray:
    """Unmasked scaled dot-product attention.

    ``row_chunk`` bounds how many query rows are scored at once, keeping the
    L x L score matrix out of memory for long sequences (the dense baseline
    in the benchmarks).
    """
    q = _as_matrix(q, "Q")
    k = _as_matrix(k, "K")
    v = _as_matrix(v, "V")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError(f"Q cols {q.shape[1]} != K cols {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeMismatchError(f"K rows {k.shape[0]} != V rows {v.shape[0]}")

    if row_chunk is None or row_chunk >= q.shape[0]:
        chunks = [slice(0, q.shape[0])]
    else:
        chunks = [slice(i, i + row_chunk) for i in range(0, q.shape[0], row_chunk)]
    out = np.empty((q.shape[0], v.shape[1]), dtype=np.result_type(q, k, v))
    for sl in chunks:
        out[sl] = _attend(q[sl], k, v, scale)
    return out


def dense_flops(l_q: int, l_kv: int, d: int) -> int:
    """FLOPs of one dense attention contraction under the fixed convention.

    2*l_q*l_kv*d multiply-adds for Q.K^T plus the same for the weighted sum
    of values: 4*l_q*l_kv*d total. Softmax and scaling are excluded, which
    matches how attention cost is usually counted in O(.) analyses.
    """
    return 4 * l_q * l_kv * d
