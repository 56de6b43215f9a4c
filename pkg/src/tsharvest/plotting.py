"""Figures for sweep tables and reachability curves (written to files, never shown)."""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRIC_LABELS = {
    "tp_ratio": "TP ratio",
    "fp_ratio": "FP ratio",
    "overhead_kbps": "overhead per node (KB/s)",
}


def _xs(values):
    """Numeric x positions, or categorical indices plus tick labels."""
    if all(isinstance(v, (int, float)) and v is not None for v in values):
        return list(values), None
    return list(range(len(values))), [str(v) for v in values]


def plot_sweep(table, out_dir, metrics=("tp_ratio", "overhead_kbps"), label=None) -> list[str]:
    """One PNG per metric with mean +- stderr over seeds against the axis."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for metric in metrics:
        rows = table.summary(metric)
        vals = [v for v, _, _ in rows]
        xs, ticks = _xs(vals)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.errorbar(xs, [m for _, m, _ in rows], yerr=[s for _, _, s in rows],
                    marker="o", capsize=3, label=label)
        if ticks:
            ax.set_xticks(xs)
            ax.set_xticklabels(ticks)
        ax.set_xlabel(table.axis)
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        if metric.endswith("_ratio"):
            ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        if label:
            ax.legend()
        fig.tight_layout()
        p = os.path.join(out_dir, f"{table.axis}_{metric}.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths


def plot_reachability(curves: dict, path) -> str:
    """``curves``: scenario -> [(offset s, mean, stderr)]."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, rows in curves.items():
        mins = [o / 60.0 for o, _, _ in rows]
        ax.errorbar(mins, [m for _, m, _ in rows], yerr=[s for _, _, s in rows],
                    marker=".", capsize=2, label=name)
    ax.set_xlabel("time after conversation (min)")
    ax.set_ylabel("reachable service hosts")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def plot_run_reachability(metrics, path) -> str:
    """Per-cycle reachability of a single run."""
    rows = [(o, f, 0.0) for o, f in metrics.reachability if not math.isnan(f)]
    return plot_reachability({metrics.method: rows}, path)
