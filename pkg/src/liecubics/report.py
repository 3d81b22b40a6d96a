"""Run artifacts: trajectory CSV, JSON summary, and rendered figures.

Field names in the CSV header and summary keys are part of the frozen
external interface (see README).  Figures are written as PNG files next to
the delimited output.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .algebra import ABELIAN
from .dynamics import Trajectory, cubic_first_integral
from .geometry import Metric
from .verification import _pairwise_d2


def csv_header(metric: Metric) -> str:
    alg = metric.algebra
    if alg.kind == ABELIAN:
        pose_cols = [f"g{i + 1}" for i in range(alg.dim)]
    else:
        n = alg.matrix_size
        pose_cols = [f"g{r + 1}{c + 1}" for r in range(n) for c in range(n)]
    jet_cols = [f"xi{i}_{d + 1}" for i in range(3) for d in range(alg.dim)]
    return ",".join(["t", "agent"] + pose_cols + jet_cols)


def write_trajectory_csv(path, metric: Metric, traj: Trajectory) -> None:
    """One row per (time, agent); poses flattened row-major; 1-based agents."""
    lines = [csv_header(metric)]
    for k in range(traj.node_count):
        t = traj.times[k]
        for j in range(traj.agent_count):
            vals = ([t] + list(np.ravel(traj.poses[j, k]))
                    + list(traj.jets[j, k].ravel()))
            lines.append(f"{t:.17g},{j + 1},"
                         + ",".join(f"{v:.17g}" for v in vals[1:]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def pairwise_distance_series(metric: Metric, traj: Trajectory) -> dict:
    """Distance over time for every unordered agent pair."""
    out = {}
    s = traj.agent_count
    for a in range(s):
        for b in range(a + 1, s):
            d2 = _pairwise_d2(metric, traj.poses[a], traj.poses[b])
            out[(a, b)] = np.sqrt(np.maximum(d2, 0.0))
    return out


def min_pairwise_distance(metric: Metric, traj: Trajectory) -> float | None:
    series = pairwise_distance_series(metric, traj)
    if not series:
        return None
    return float(min(d.min() for d in series.values()))


def render_jet_figure(path, traj: Trajectory) -> None:
    s = traj.agent_count
    fig, axes = plt.subplots(s, 3, figsize=(11, 2.6 * s), squeeze=False)
    names = ["xi0", "xi1", "xi2"]
    for j in range(s):
        for i in range(3):
            ax = axes[j][i]
            ax.plot(traj.times, traj.jets[j, :, i, :])
            ax.set_title(f"agent {j + 1}: {names[i]}", fontsize=9)
            ax.grid(True, alpha=0.3)
            if j == s - 1:
                ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_distance_figure(path, metric: Metric, traj: Trajectory) -> None:
    series = pairwise_distance_series(metric, traj)
    if not series:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    for (a, b), d in series.items():
        ax.plot(traj.times, d, label=f"d(agent {a + 1}, agent {b + 1})")
    ax.set_xlabel("t")
    ax.set_ylabel("distance")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_first_integral_figure(path, metric: Metric, traj: Trajectory) -> None:
    I = cubic_first_integral(metric, traj)
    fig, ax = plt.subplots(figsize=(7, 4))
    for j in range(I.shape[0]):
        ax.plot(traj.times, I[j] - I[j, 0], label=f"agent {j + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("first-integral drift")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_paths_figure(path, metric: Metric, traj: Trajectory) -> None:
    """Planar agent paths; only drawn for two-dimensional abelian groups."""
    if metric.algebra.kind != ABELIAN or metric.algebra.dim != 2:
        return
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for j in range(traj.agent_count):
        xy = traj.poses[j]
        ax.plot(xy[:, 0], xy[:, 1], label=f"agent {j + 1}")
        ax.plot(xy[0, 0], xy[0, 1], "o", color=ax.lines[-1].get_color())
        ax.plot(xy[-1, 0], xy[-1, 1], "s", color=ax.lines[-1].get_color())
    ax.set_aspect("equal")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_residual_figure(path, report) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for j in range(report.norms.shape[0]):
        ax.semilogy(report.times, report.norms[j], label=f"agent {j + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("optimality residual norm")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_descent_figure(path, history) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(history)), history, marker=".")
    ax.set_xlabel("iteration")
    ax.set_ylabel("discrete action")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
