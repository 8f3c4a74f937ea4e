"""Figure rendering for benchmark reports.

Uses the Agg backend so figures render headlessly to files; nothing here
opens a window. The CSV remains the canonical benchmark artifact, figures
are an optional companion.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import BenchRow


def scaling_figure(rows: Sequence[BenchRow]):
    """Two panels vs shot count: exact FLOPs and measured wall time."""
    if not rows:
        raise ValueError("no benchmark rows to plot")
    n = [r.n_shots for r in rows]
    fig, (ax_flops, ax_wall) = plt.subplots(1, 2, figsize=(9, 3.6))

    ax_flops.plot(n, [r.flops_sparse for r in rows], "o-", label="sparse")
    ax_flops.plot(n, [r.flops_dense for r in rows], "s--", label="dense")
    ax_flops.set_xlabel("shots")
    ax_flops.set_ylabel("attention FLOPs")
    ax_flops.set_title("exact FLOP count")

    ax_wall.plot(n, [r.wall_ms_sparse for r in rows], "o-", label="sparse")
    ax_wall.plot(n, [r.wall_ms_dense for r in rows], "s--", label="dense")
    ax_wall.set_xlabel("shots")
    ax_wall.set_ylabel("median wall time (ms)")
    ax_wall.set_title("measured wall time")

    for ax in (ax_flops, ax_wall):
        ax.legend()
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def save_scaling_figure(rows: Sequence[BenchRow], path: str) -> str:
    fig = scaling_figure(rows)
    try:
        fig.savefig(path, dpi=150)
    finally:
        plt.close(fig)
    return path
