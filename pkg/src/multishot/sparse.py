"""Sparse inter-shot self-attention over a packed variable-length layout.

Attention is dense within each shot; across shots, every query sees only a
global cache built from each shot's summary tokens. Per shot the key/value
context is gathered into one packed segment (no padding rows), delimited by
cumulative offsets, and an exact FLOP model accounts for the cost.

Two plan modes exist. ``DEDUPE`` (default) removes the query shot's own
summary tokens from the global cache, since they already appear in its
dense block; the resulting pattern is exactly expressible as a boolean
mask, making the dense oracle exact. ``LITERAL`` keeps the full cache, so a
shot's own summary keys enter its softmax twice; it is retained behind a
flag for fidelity experiments and cannot be expressed as a mask.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .attention import _as_matrix, _attend, dense_flops
from .errors import PlanLayoutMismatchError, ShapeMismatchError, UnrepresentableAsMaskError
from .layout import SummaryStrategy, TokenLayout, summary_token_indices


class PlanMode(Enum):
    DEDUPE = "dedupe"
    LITERAL = "literal"


@dataclass(frozen=True)
class SparsePlan:
    """Per-shot query ranges and key/value gather lists.

    ``kv_indices[i]`` is shot i's context: in DEDUPE mode the ascending
    union of its own tokens and the other shots' summary tokens; in LITERAL
    mode the full summary cache (all shots, ascending) followed by all of
    shot i's own tokens. ``offsets`` are cumulative segment lengths over the
    concatenated per-shot lists, so ``offsets[-1]`` is the packed KV count.
    """

    query_ranges: tuple[tuple[int, int], ...]
    kv_indices: tuple[tuple[int, ...], ...]
    summary_counts: tuple[int, ...]
    mode: PlanMode
    strategy: SummaryStrategy
    total_tokens: int
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        if len(self.kv_indices) != len(self.query_ranges):
            raise ValueError("one KV list per query range required")
        offsets = [0]
        for i, kv in enumerate(self.kv_indices):
            if not kv:
                raise ValueError(f"shot {i} has an empty KV list")
            offsets.append(offsets[-1] + len(kv))
        object.__setattr__(self, "offsets", tuple(offsets))

    @property
    def n_shots(self) -> int:
        return len(self.query_ranges)


@dataclass(frozen=True)
class FlopReport:
    """Exact attention FLOPs of one plan at head width d."""

    per_shot: tuple[int, ...]
    total: int
    closed_form: int | None  # uniform DEDUPE layouts only


def build_sparse_plan(
    layout: TokenLayout,
    strategy: SummaryStrategy,
    mode: PlanMode = PlanMode.DEDUPE,
) -> SparsePlan:
    """Build the per-shot KV gather plan for a layout and summary strategy."""
    summaries = summary_token_indices(layout, strategy)
    kv_lists = []
    for i, (start, end) in enumerate(layout.ranges):
        own = range(start, end)
        if mode is PlanMode.DEDUPE:
            other = {idx for j, s in enumerate(summaries) if j != i for idx in s}
            kv_lists.append(tuple(sorted(other.union(own))))
        else:
            cache = [idx for s in summaries for idx in s]
            kv_lists.append(tuple(cache) + tuple(own))
    return SparsePlan(
        query_ranges=layout.ranges,
        kv_indices=tuple(kv_lists),
        summary_counts=tuple(len(s) for s in summaries),
        mode=mode,
        strategy=strategy,
        total_tokens=layout.total_tokens,
    )


def pack_varlen(plan: SparsePlan, k, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gather each shot's KV rows into packed segments with no padding.

    Returns ``(packed_k, packed_v, offsets)`` where ``offsets[i]:offsets[i+1]``
    delimits shot i's segment in the packed arrays.
    """
    k = _as_matrix(k, "K")
    v = _as_matrix(v, "V")
    if k.shape[0] != plan.total_tokens or v.shape[0] != plan.total_tokens:
        raise PlanLayoutMismatchError(
            f"K/V rows ({k.shape[0]}, {v.shape[0]}) != plan token count {plan.total_tokens}"
        )
    gather = np.fromiter(
        (idx for kv in plan.kv_indices for idx in kv), dtype=np.intp, count=plan.offsets[-1]
    )
    if gather.size and (gather.min() < 0 or gather.max() >= k.shape[0]):
        raise PlanLayoutMismatchError("plan KV index outside the K/V row range")
    offsets = np.asarray(plan.offsets, dtype=np.int64)
    return k[gather], v[gather], offsets


def sparse_self_attention(q, k, v, plan: SparsePlan) -> np.ndarray:
    """Self-attention where each shot attends to its packed KV segment.

    Shots are independent given the packed K/V, so output rows for shot i
    depend only on Q over shot i's range and that shot's segment.
    """
    q = _as_matrix(q, "Q")
    if q.shape[0] != plan.total_tokens:
        raise PlanLayoutMismatchError(
            f"Q rows {q.shape[0]} != plan token count {plan.total_tokens}"
        )
    packed_k, packed_v, offsets = pack_varlen(plan, k, v)
    if q.shape[1] != packed_k.shape[1]:
        raise ShapeMismatchError(f"Q cols {q.shape[1]} != K cols {packed_k.shape[1]}")

    scale = 1.0 / math.sqrt(q.shape[1])
    out = np.empty((q.shape[0], packed_v.shape[1]), dtype=np.result_type(q, packed_k, packed_v))
    for i, (qs, qe) in enumerate(plan.query_ranges):
        seg = slice(int(offsets[i]), int(offsets[i + 1]))
        out[qs:qe] = _attend(q[qs:qe], packed_k[seg], packed_v[seg], scale)
    return out


def plan_to_dense_mask(plan: SparsePlan) -> np.ndarray:
    """Boolean L x L mask equivalent of a DEDUPE plan (the oracle bridge)."""
    if plan.mode is not PlanMode.DEDUPE:
        raise UnrepresentableAsMaskError(
            "LITERAL plans duplicate keys and cannot be expressed as a boolean mask"
        )
    mask = np.zeros((plan.total_tokens, plan.total_tokens), dtype=bool)
    for (qs, qe), kv in zip(plan.query_ranges, plan.kv_indices):
        mask[qs:qe, list(kv)] = True
    return mask


def sparse_flops(plan: SparsePlan, d: int) -> FlopReport:
    """Exact FLOPs per shot and in total, under the dense_flops convention.

    On uniform layouts (equal shot length, equal summary count) in DEDUPE
    mode the total also equals the closed form
    ``4 * N * L_shot * (L_shot + (N - 1) * S) * d``, returned alongside for
    assertion; otherwise ``closed_form`` is None.
    """
    per_shot = tuple(
        dense_flops(qe - qs, len(kv), d)
        for (qs, qe), kv in zip(plan.query_ranges, plan.kv_indices)
    )
    total = sum(per_shot)

    widths = {qe - qs for qs, qe in plan.query_ranges}
    counts = set(plan.summary_counts)
    closed = None
    if plan.mode is PlanMode.DEDUPE and len(widths) == 1 and len(counts) == 1:
        n = plan.n_shots
        l_shot = widths.pop()
        s = counts.pop()
        closed = 4 * n * l_shot * (l_shot + (n - 1) * s) * d
    return FlopReport(per_shot=per_shot, total=total, closed_form=closed)


def plan_manifest(plan: SparsePlan) -> str:
    """Human-readable manifest: one JSON record per shot, index lists in
    plan order (ascending in DEDUPE mode)."""
    lines = []
    for i, ((qs, qe), kv) in enumerate(zip(plan.query_ranges, plan.kv_indices)):
        lines.append(
            json.dumps(
                {"shot": i, "query_range": [qs, qe], "kv_indices": list(kv)},
                separators=(", ", ": "),
            )
        )
    return "\n".join(lines) + "\n"
