"""Batch rendering of experiment figures.

Figures are written next to the delimited tables; nothing here is
interactive.  Each figure plots one relative metric against the arrival
rate, one line per policy, with error bars from the per-seed confidence
intervals.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLES = {
    "edf": dict(color="#555555", marker="o"),
    "mud": dict(color="#d62728", marker="s"),
    "medf": dict(color="#1f77b4", marker="^"),
    "cmutheta": dict(color="#2ca02c", marker="v"),
    "cmutheta_edf": dict(color="#9467bd", marker="D"),
    "greedy": dict(color="#ff7f0e", marker="x"),
    "fcfs": dict(color="#8c564b", marker="+"),
}


def render_relative_metric(summary_rows, mean_key: str, ci_key: str,
                           ylabel: str, title: str, path) -> None:
    """Plot a relative metric (baseline = EDF) over the arrival-rate grid.

    ``summary_rows`` holds one dict per (lambda_a, policy) cell with at least
    ``lambda_a``, ``policy``, ``mean_key``, and ``ci_key`` entries.
    """
    by_policy: dict[str, list[tuple[float, float, float]]] = {}
    for row in summary_rows:
        by_policy.setdefault(row["policy"], []).append(
            (row["lambda_a"], row[mean_key], row[ci_key]))
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for policy, points in by_policy.items():
        points.sort()
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        errs = [p[2] for p in points]
        style = _STYLES.get(policy, {})
        ax.errorbar(xs, ys, yerr=errs, label=policy, capsize=3, **style)
    ax.axhline(1.0, color="black", linewidth=0.8, linestyle=":")
    ax.set_xlabel("arrival rate $\\lambda_a$")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
