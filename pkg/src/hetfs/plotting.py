"""Figures written next to the CLI's textual reports (headless Agg backend)."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .weights import ContributionGraph

_META = {"Software": None}  # keep saved files free of version stamps


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {"metadata": _META} if path.suffix.lower() in (".png", ".pdf", ".svg") else {}
    fig.savefig(path, dpi=120, bbox_inches="tight", **kwargs)
    plt.close(fig)
    return path


def plot_topk(result, path) -> Path:
    """Horizontal bar chart of a top-k result, best match on top."""
    items = list(result.items)
    fig, ax = plt.subplots(figsize=(6, max(1.5, 0.3 * len(items) + 1)))
    if items:
        names = [n for n, _ in items][::-1]
        scores = [s for _, s in items][::-1]
        ax.barh(names, scores, color="tab:blue")
    ax.set_xlabel("similarity")
    ax.set_title(f"{result.query} via {result.metapaths or '(none)'}")
    return _save(fig, path)


def plot_metrics(metrics: Mapping[str, float], path, title: str = "") -> Path:
    keys = [k for k, v in metrics.items() if isinstance(v, float)]
    fig, ax = plt.subplots(figsize=(1.2 * len(keys) + 2, 3))
    ax.bar(keys, [metrics[k] for k in keys], color="tab:green")
    ax.set_ylim(0, 1.05)
    for i, k in enumerate(keys):
        ax.text(i, metrics[k] + 0.02, f"{metrics[k]:.3f}", ha="center")
    ax.set_title(title)
    return _save(fig, path)


def plot_convergence(history: Sequence[float], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.semilogy(range(1, len(history) + 1), [max(h, 1e-300) for h in history], marker=".")
    ax.set_xlabel("iteration")
    ax.set_ylabel("max change")
    ax.set_title("centrality convergence")
    return _save(fig, path)


def plot_contribution(cg: ContributionGraph, path) -> Path:
    """Node types on a circle, one arrow per relation labelled with its mu."""
    types = list(cg.schema.node_types)
    pos = {t: (math.cos(2 * math.pi * i / len(types)), math.sin(2 * math.pi * i / len(types)))
           for i, t in enumerate(types)}
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for rel in cg.schema.relations:
        (x0, y0), (x1, y1) = pos[rel.src], pos[rel.dst]
        label = f"{rel.name}: {cg.mu[rel.name]:.2f}"
        if rel.src == rel.dst:
            ax.annotate(label, (x0, y0), xytext=(x0 * 1.35, y0 * 1.35), ha="center",
                        arrowprops=dict(arrowstyle="-", color="gray"))
            continue
        style = "-" if rel.self_inverse else "->"
        ax.annotate("", (x1, y1), xytext=(x0, y0),
                    arrowprops=dict(arrowstyle=style, lw=1 + 4 * cg.mu[rel.name], shrinkA=15, shrinkB=15))
        ax.text((x0 + x1) / 2, (y0 + y1) / 2, label, ha="center", va="center",
                bbox=dict(boxstyle="round", fc="white", ec="none"))
    for t, (x, y) in pos.items():
        ax.scatter([x], [y], s=600, color="tab:orange", zorder=3)
        ax.text(x, y, t, ha="center", va="center", zorder=4)
    ax.set_xlim(-1.7, 1.7)
    ax.set_ylim(-1.7, 1.7)
    ax.set_axis_off()
    return _save(fig, path)


def plot_latency(edges: Sequence[int], median_ms: Sequence[float], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(edges, median_ms, marker="o")
    ax.set_xlabel("edges")
    ax.set_ylabel("median query ms")
    ax.set_title("query latency")
    return _save(fig, path)
