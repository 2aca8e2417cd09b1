"""Figure rendering for experiment outputs. Every report CSV has a PNG twin."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simcore import PeriodObservation
from .taskmodel import TaskSetSpec


def save_reward_curve(curve: Sequence[tuple[float, float]], path: str) -> None:
    """Mean greedy-evaluation reward per training, with standard error band."""
    means = np.array([m for m, _ in curve])
    errs = np.array([s for _, s in curve])
    xs = np.arange(1, len(curve) + 1)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(xs, means, lw=1.0, color="tab:blue")
    ax.fill_between(xs, means - errs, means + errs, alpha=0.3, color="tab:blue")
    ax.set_xlabel("training")
    ax.set_ylabel("evaluation reward")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_exet_curves(
    exets: Sequence[Sequence[float]], taskset: TaskSetSpec, path: str
) -> None:
    """Per-task mean execution time per training, against the deadlines."""
    data = np.asarray(exets)
    n_tasks = taskset.n_tasks
    cols = min(4, n_tasks)
    rows = (n_tasks + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.4 * rows), squeeze=False)
    xs = np.arange(1, data.shape[0] + 1)
    for i in range(n_tasks):
        ax = axes[i // cols][i % cols]
        ax.plot(xs, data[:, i], lw=1.0, color="tab:blue")
        ax.axhline(
            taskset.tasks[i].relative_deadline, color="tab:orange", ls="--", lw=1.0
        )
        ax.set_title(f"task {taskset.tasks[i].id}", fontsize=9)
        ax.grid(alpha=0.3)
    for j in range(n_tasks, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.supxlabel("training")
    fig.supylabel("execution time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_policy_trace(
    observations: Sequence[PeriodObservation],
    taskset: TaskSetSpec,
    freq_max: float,
    path: str,
) -> None:
    """Frequency steps and per-period utilization over one greedy episode."""
    ends = [o.wall_clock_end for o in observations]
    starts = [ends[0] - observations[0].duration] + ends[:-1]
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for s, e, o in zip(starts, ends, observations):
        ax.fill_between([s, e], [o.util_max] * 2, color="tab:blue", alpha=0.35, lw=0)
        ax.fill_between([s, e], [o.util_avg] * 2, color="tab:blue", alpha=0.6, lw=0)
    freq_norm = [o.freq / freq_max for o in observations]
    ax.step(ends, freq_norm, where="pre", color="tab:orange", lw=1.5, label="freq / f_max")
    for t in taskset.tasks:
        ax.axvline(t.absolute_deadline, color="gray", ls=":", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("utilization, normalized frequency")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_power_comparison(
    names: Sequence[str], normalized_power: Sequence[float], path: str
) -> None:
    """Normalized average power per governor (the max-frequency policy is 1.0)."""
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    xs = np.arange(len(names))
    bars = ax.bar(xs, normalized_power, color="tab:blue", width=0.6)
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    ax.set_xticks(xs, names)
    ax.set_ylabel("normalized power")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
