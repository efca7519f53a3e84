"""SVG chart emission for run reports."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _marker(ax, x, label, color):
    if x is None:
        return
    ax.axvline(x, color=color, linestyle="--", linewidth=1, alpha=0.8)
    ax.text(x, 0.02, f" {label}", rotation=90, color=color, fontsize=7,
            transform=ax.get_xaxis_transform(), va="bottom")


def plot_accuracy(rows: list[tuple[int, int, float]], summary: dict, out_path: Path) -> None:
    """Per-node accuracy curves plus the node mean, with timing markers."""
    by_node: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for tick, node, acc in rows:
        by_node[node].append((tick, acc))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    mean_acc: dict[int, list[float]] = defaultdict(list)
    for node, series in sorted(by_node.items()):
        ticks = [t for t, _ in series]
        accs = [a for _, a in series]
        ax.plot(ticks, accs, color="steelblue", alpha=0.25, linewidth=0.7)
        for t, a in series:
            mean_acc[t].append(a)
    ticks = sorted(mean_acc)
    ax.plot(ticks, [sum(mean_acc[t]) / len(mean_acc[t]) for t in ticks],
            color="navy", linewidth=1.8, label="node mean")
    ax.axhline(0.9, color="gray", linewidth=0.8, linestyle=":")
    _marker(ax, summary.get("t_first_average"), "first average", "darkorange")
    _marker(ax, summary.get("plateau_delay"), "plateau delay", "crimson")
    _marker(ax, summary.get("first_90"), "first 90%", "seagreen")
    _marker(ax, summary.get("most_90"), "most 90%", "darkgreen")
    ax.set_xlabel("tick")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def plot_variance(rows: list[tuple[int, int, str, float]], out_path: Path) -> None:
    """Layer-variance trajectories (node mean per layer), log-scale y."""
    by_layer: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for tick, _, layer, var in rows:
        by_layer[layer][tick].append(var)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for layer in sorted(by_layer):
        ticks = sorted(by_layer[layer])
        means = [sum(by_layer[layer][t]) / len(by_layer[layer][t]) for t in ticks]
        ax.plot(ticks, means, label=layer, linewidth=1.4)
    ax.set_yscale("log")
    ax.set_xlabel("tick")
    ax.set_ylabel("weight variance (log scale)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def plot_weight_diff(rows: list[tuple[int, str, float]], out_path: Path) -> None:
    """Layer-wise Manhattan distance between node models over time."""
    by_layer: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for tick, layer, diff in rows:
        by_layer[layer].append((tick, diff))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for layer in sorted(by_layer):
        series = sorted(by_layer[layer])
        ax.plot([t for t, _ in series], [d for _, d in series], label=layer, linewidth=1.4)
    ax.set_xlabel("tick")
    ax.set_ylabel("model weight difference")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
