"""Scaling benchmarks and randomized oracle verification.

FLOP columns come from the exact integer counters and are deterministic
given the config; wall times are medians over repetitions and vary with
hardware. Random inputs are standard normal, generated by numpy's PCG64
keyed by the config seed (per-row streams via SeedSequence spawn keys), so
identical config + seed reproduces identical inputs.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .attention import dense_attention, dense_flops, masked_dense_attention
from .errors import ConfigTooLargeError
from .layout import (
    FirstAndLastFrame,
    FirstFrame,
    ShotSpec,
    SummaryStrategy,
    TokenLayout,
    build_token_layout,
)
from .sparse import PlanMode, SparsePlan, build_sparse_plan, plan_to_dense_mask, sparse_flops, sparse_self_attention
from .window import PromptLayout, build_cross_mask, prompt_layout_from_counts, window_cross_attention

PRECISIONS = ("double", "single")
TOLERANCES = {"double": 1e-10, "single": 1e-5}
DTYPES = {"double": np.float64, "single": np.float32}

BENCH_CSV_COLUMNS = (
    "n_shots",
    "l_shot",
    "tpf",
    "s",
    "d",
    "mode",
    "precision",
    "flops_sparse",
    "flops_dense",
    "wall_ms_sparse",
    "wall_ms_dense",
)

# Ceiling on the transient score-chunk buffer used by the dense baseline.
_DENSE_CHUNK_BYTES = 128 << 20


@dataclass(frozen=True)
class BenchConfig:
    """One scaling sweep: uniform shots, swept over shot counts."""

    n_shots: tuple[int, ...]
    frames: int
    tokens_per_frame: int
    strategy: SummaryStrategy = FirstFrame()
    mode: PlanMode = PlanMode.DEDUPE
    d: int = 64
    precision: str = "double"
    repetitions: int = 3
    seed: int = 0
    max_dense_tokens: int = 32768

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_shots", tuple(self.n_shots))
        if not self.n_shots or any(n < 1 for n in self.n_shots):
            raise ValueError(f"n_shots must be non-empty counts >= 1, got {self.n_shots}")
        for name in ("frames", "tokens_per_frame", "d", "repetitions", "max_dense_tokens"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")


@dataclass(frozen=True)
class BenchRow:
    n_shots: int
    l_shot: int
    tpf: int
    s: int
    d: int
    mode: str
    precision: str
    flops_sparse: int
    flops_dense: int
    wall_ms_sparse: float
    wall_ms_dense: float


def _median_ms(fn: Callable[[], object], repetitions: int) -> float:
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(times)


def _row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(row,))))


def bench_scaling(config: BenchConfig) -> list[BenchRow]:
    """One row per swept shot count, in sweep order."""
    rows = []
    dtype = DTYPES[config.precision]
    for i, n in enumerate(config.n_shots):
        total = n * config.frames * config.tokens_per_frame
        if total > config.max_dense_tokens:
            raise ConfigTooLargeError(
                f"dense baseline needs {total} tokens > guard {config.max_dense_tokens}"
            )
        layout = build_token_layout(
            [ShotSpec(config.frames, config.tokens_per_frame)] * n
        )
        plan = build_sparse_plan(layout, config.strategy, config.mode)
        flops = sparse_flops(plan, config.d)

        rng = _row_rng(config.seed, i)
        q = rng.standard_normal((total, config.d)).astype(dtype, copy=False)
        k = rng.standard_normal((total, config.d)).astype(dtype, copy=False)
        v = rng.standard_normal((total, config.d)).astype(dtype, copy=False)

        scale = 1.0 / math.sqrt(config.d)
        row_chunk = max(1, _DENSE_CHUNK_BYTES // (total * np.dtype(dtype).itemsize))
        wall_sparse = _median_ms(lambda: sparse_self_attention(q, k, v, plan), config.repetitions)
        wall_dense = _median_ms(
            lambda: dense_attention(q, k, v, scale, row_chunk=row_chunk), config.repetitions
        )
        rows.append(
            BenchRow(
                n_shots=n,
                l_shot=config.frames * config.tokens_per_frame,
                tpf=config.tokens_per_frame,
                s=plan.summary_counts[0],
                d=config.d,
                mode=config.mode.value,
                precision=config.precision,
                flops_sparse=flops.total,
                flops_dense=dense_flops(total, total, config.d),
                wall_ms_sparse=wall_sparse,
                wall_ms_dense=wall_dense,
            )
        )
    return rows


def write_bench_csv(rows: Sequence[BenchRow], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(BENCH_CSV_COLUMNS)
    for row in rows:
        writer.writerow([getattr(row, col) for col in BENCH_CSV_COLUMNS])


@dataclass(frozen=True)
class CheckResult:
    case: int
    kind: str  # "sparse" | "window"
    n_shots: int
    total_tokens: int
    d: int
    max_abs_diff: float
    worst_query_shot: int


@dataclass(frozen=True)
class FaultResult:
    """Location of an injected plan corruption, as seen by the oracle."""

    query_shot: int
    source_shot: int
    dropped_index: int
    max_abs_diff: float
    detected: bool


@dataclass(frozen=True)
class VerifyReport:
    precision: str
    tolerance: float
    checks: tuple[CheckResult, ...]
    fault: FaultResult | None
    max_abs_diff: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        worst = max((c.max_abs_diff for c in self.checks), default=0.0)
        object.__setattr__(self, "max_abs_diff", worst)
        object.__setattr__(self, "passed", worst <= self.tolerance and self.fault is None)


def _diff_against_oracle(
    produced: np.ndarray, q64, k64, v64, mask, layout: TokenLayout
) -> tuple[float, int]:
    scale = 1.0 / math.sqrt(q64.shape[1])
    oracle = masked_dense_attention(q64, k64, v64, mask, scale)
    diff = np.abs(produced.astype(np.float64) - oracle)
    worst_row = int(np.unravel_index(np.argmax(diff), diff.shape)[0])
    return float(diff.max()), layout.shot_of_token(worst_row)


def verify_equivalence(
    seed: int,
    cases: int,
    *,
    precision: str = "double",
    max_shots: int = 6,
    max_frames: int = 4,
    max_tpf: int = 8,
    max_d: int = 32,
    inject_fault: bool = False,
) -> VerifyReport:
    """Randomized sparse-vs-oracle and window-vs-oracle equivalence checks.

    Each case draws a random layout and standard-normal Q/K/V; the
    specialized paths run at the requested precision and are compared
    against the double-precision masked-dense oracle. With
    ``inject_fault`` one summary index is dropped from a plan to
    demonstrate that the harness catches and locates the corruption.
    """
    if cases < 1:
        raise ValueError(f"cases must be >= 1, got {cases}")
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}, got {precision!r}")
    tol = TOLERANCES[precision]
    dtype = DTYPES[precision]
    rng = np.random.default_rng(np.random.PCG64(seed))
    checks = []

    for case in range(cases):
        n = int(rng.integers(1, max_shots + 1))
        specs = [
            ShotSpec(int(rng.integers(1, max_frames + 1)), int(rng.integers(1, max_tpf + 1)))
            for _ in range(n)
        ]
        layout = build_token_layout(specs)
        d = int(rng.integers(4, max_d + 1))
        strategy: SummaryStrategy = FirstFrame() if rng.integers(2) == 0 else FirstAndLastFrame()
        total = layout.total_tokens

        # Sparse inter-shot self-attention vs masked-dense oracle.
        q64 = rng.standard_normal((total, d))
        k64 = rng.standard_normal((total, d))
        v64 = rng.standard_normal((total, d))
        plan = build_sparse_plan(layout, strategy, PlanMode.DEDUPE)
        out = sparse_self_attention(
            q64.astype(dtype, copy=False), k64.astype(dtype, copy=False),
            v64.astype(dtype, copy=False), plan,
        )
        diff, worst_shot = _diff_against_oracle(
            out, q64, k64, v64, plan_to_dense_mask(plan), layout
        )
        checks.append(CheckResult(case, "sparse", n, total, d, diff, worst_shot))

        # Window cross-attention vs masked-dense oracle.
        prompt = prompt_layout_from_counts(
            global_tokens=int(rng.integers(1, 9)),
            shot_tokens=[int(rng.integers(1, 7)) for _ in range(n)],
            delimiter_tokens=int(rng.integers(0, 3)),
        )
        kt64 = rng.standard_normal((prompt.text_tokens, d))
        vt64 = rng.standard_normal((prompt.text_tokens, d))
        out = window_cross_attention(
            q64.astype(dtype, copy=False), kt64.astype(dtype, copy=False),
            vt64.astype(dtype, copy=False), layout, prompt,
        )
        diff, worst_shot = _diff_against_oracle(
            out, q64, kt64, vt64, build_cross_mask(layout, prompt), layout
        )
        checks.append(CheckResult(case, "window", n, total, d, diff, worst_shot))

    fault = _run_fault_case(rng, dtype, tol) if inject_fault else None
    return VerifyReport(precision=precision, tolerance=tol, checks=tuple(checks), fault=fault)


def _run_fault_case(rng: np.random.Generator, dtype, tol: float) -> FaultResult:
    # Three uniform shots; drop shot 2's first summary token from shot 0's
    # KV list and verify the oracle localizes the divergence to shot 0.
    layout = build_token_layout([ShotSpec(2, 2)] * 3)
    plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
    dropped = layout.ranges[2][0]  # shot 2's first summary token
    corrupted_kv = tuple(idx for idx in plan.kv_indices[0] if idx != dropped)
    corrupted = replace(plan, kv_indices=(corrupted_kv, *plan.kv_indices[1:]))

    d = 8
    q64 = rng.standard_normal((layout.total_tokens, d))
    k64 = rng.standard_normal((layout.total_tokens, d))
    v64 = rng.standard_normal((layout.total_tokens, d))
    out = sparse_self_attention(
        q64.astype(dtype, copy=False), k64.astype(dtype, copy=False),
        v64.astype(dtype, copy=False), corrupted,
    )
    diff, worst_shot = _diff_against_oracle(
        out, q64, k64, v64, plan_to_dense_mask(plan), layout
    )
    return FaultResult(
        query_shot=worst_shot,
        source_shot=layout.shot_of_token(dropped),
        dropped_index=int(dropped),
        max_abs_diff=diff,
        detected=diff > tol,
    )
