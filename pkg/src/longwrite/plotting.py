"""Report figures written next to the JSON and text outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .planner import PlanMetrics, Schedule, WritingPlan  # noqa: E402

# fixed metadata keeps PNG bytes reproducible across runs
_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_plan_stats(rows: Sequence[tuple[str, PlanMetrics]], path: str | Path) -> Path:
    """Grouped bars of nodes, edges, density and longest path per article."""
    labels = [name for name, _ in rows]
    series = {
        "nodes": [m.node_count for _, m in rows],
        "edges": [m.edge_count for _, m in rows],
        "density": [m.dependency_density for _, m in rows],
        "longest path (edges)": [m.longest_path for _, m in rows],
    }
    fig, axes = plt.subplots(1, 4, figsize=(max(8, 1.2 * len(rows) + 6), 3.2), sharex=True)
    for ax, (title, values) in zip(axes, series.items()):
        ax.bar(range(len(values)), values, color="0.35")
        ax.set_title(title, fontsize=10)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    if "density" in series:
        axes[2].axhline(1.0, ls="--", lw=0.8, color="tab:red")
    fig.tight_layout()
    return _save(fig, path)


def plot_plan_dag(plan: WritingPlan, schedule: Schedule, path: str | Path) -> Path:
    """Plan drawn in schedule waves, left to right."""
    pos = {}
    for x, wave in enumerate(schedule.waves):
        for y, node in enumerate(wave):
            pos[node] = (x, -y)
    width = max(4, 2.2 * len(schedule.waves))
    height = max(2.5, 0.7 * max((len(w) for w in schedule.waves), default=1) + 1)
    fig, ax = plt.subplots(figsize=(width, height))
    for u, v in plan.sorted_edges():
        (x0, y0), (x1, y1) = pos[u], pos[v]
        ax.annotate("", xy=(x1, y1), xytext=(x0, y0),
                    arrowprops={"arrowstyle": "->", "color": "0.5", "lw": 0.8, "shrinkA": 12, "shrinkB": 12})
    for node, (x, y) in pos.items():
        ax.text(x, y, node, ha="center", va="center", fontsize=8,
                bbox={"boxstyle": "round", "fc": "white", "ec": "0.3"})
    ax.set_xlim(-0.8, len(schedule.waves) - 0.2)
    ax.set_ylim(min((y for _, y in pos.values()), default=0) - 0.8, 0.8)
    ax.axis("off")
    fig.tight_layout()
    return _save(fig, path)


def plot_outline_scores(rows: Sequence[tuple[str, float, float, float]], path: str | Path) -> Path:
    """Recall, precision and F1 per topic as grouped bars."""
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(rows) + 3), 3.5))
    width = 0.27
    xs = range(len(rows))
    for i, (name, color) in enumerate((("recall", "0.7"), ("precision", "0.45"), ("F1", "0.15"))):
        ax.bar([x + (i - 1) * width for x in xs], [r[i + 1] for r in rows], width, label=name, color=color)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r[0] for r in rows], rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
