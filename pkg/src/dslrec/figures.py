"""Matplotlib rendering for the report path (Agg only, deterministic output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# Fixed metadata so repeated runs write byte-identical PNGs.
_SAVE_KW = dict(dpi=150, metadata={"Software": "dslrec"})


def save_loss_curves(curves: dict[str, list[float]], path: str | Path) -> Path:
    """One training-loss line per run id."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run_id in sorted(curves):
        ys = curves[run_id]
        ax.plot(range(1, len(ys) + 1), ys, label=run_id, linewidth=1.4)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean train loss")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_validation_curves(curves: dict[str, list[float]], path: str | Path) -> Path:
    """Per-epoch validation NDCG trajectories."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run_id in sorted(curves):
        ys = curves[run_id]
        ax.plot(range(1, len(ys) + 1), ys, label=run_id, linewidth=1.4)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation NDCG")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_metric_bars(
    rows: list[tuple[str, float, float]], path: str | Path, title: str = ""
) -> Path:
    """Grouped recall/NDCG bars: rows are (label, recall, ndcg)."""
    labels = [r[0] for r in rows]
    recalls = [r[1] for r in rows]
    ndcgs = [r[2] for r in rows]
    x = range(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar([i - width / 2 for i in x], recalls, width, label="Recall@K")
    ax.bar([i + width / 2 for i in x], ndcgs, width, label="NDCG@K")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("metric value")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_head_tail_bars(
    rows: list[tuple[str, float, float]], path: str | Path
) -> Path:
    """Improvement bars per run group: rows are (label, head_imp_pct, tail_imp_pct).

    A third line tracks the tail-minus-head gap, the quantity of interest for
    long-tail behavior.
    """
    labels = [r[0] for r in rows]
    head = [r[1] for r in rows]
    tail = [r[2] for r in rows]
    gap = [t - h for h, t in zip(head, tail)]
    x = range(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar([i - width / 2 for i in x], head, width, label="head improvement %")
    ax.bar([i + width / 2 for i in x], tail, width, label="tail improvement %")
    ax.plot(list(x), gap, "o-", color="black", linewidth=1.2, label="tail - head gap")
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("improvement over baseline (%)")
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
