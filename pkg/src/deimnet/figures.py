"""Static PNG renderings written next to the delimited report files."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_error_curve(path, curve):
    """Reconstruction error against the number of interpolation points."""
    ms = [m for m, _ in curve]
    errs = [e for _, e in curve]
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.semilogy(ms, errs, marker=".", markersize=4, linewidth=1.0)
    ax.set_xlabel("interpolation points m")
    ax.set_ylabel("mean reconstruction error")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_rollout(path, coords, fields, reference, dt):
    """Predicted vs reference fields at the first, middle, and last step."""
    steps = len(fields) - 1
    picks = sorted({0, steps // 2, steps})
    fig, axes = plt.subplots(len(picks), 1, figsize=(6.0, 1.9 * len(picks)),
                             sharex=True, squeeze=False)
    for ax, k in zip(axes[:, 0], picks):
        ax.plot(coords, reference[k], linewidth=1.2, label="reference")
        ax.plot(coords, fields[k], linewidth=1.0, linestyle="--",
                label="surrogate")
        ax.set_ylabel(f"t = {k * dt:g}")
    axes[0, 0].legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_step_errors(path, times, errors):
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.semilogy(times, np.maximum(errors, 1e-300), marker=".", markersize=4)
    ax.set_xlabel("t")
    ax.set_ylabel("spatial L2 error")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_field_comparison(path, coords, predicted, reference):
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot(coords, reference, linewidth=1.2, label="reference")
    ax.plot(coords, predicted, linewidth=1.0, linestyle="--", label="surrogate")
    ax.set_xlabel("x")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_method_bars(path, rows, metric, log_scale=False):
    """One bar per comparison row; the bar height is the task metric."""
    methods = [r["method"] for r in rows]
    values = [r[metric] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.bar(range(len(rows)), values, width=0.6)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(methods, fontsize=8)
    ax.set_ylabel(metric.replace("_", " "))
    if log_scale:
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
