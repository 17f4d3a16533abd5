"""Report rendering: merge metric tables and plot them to image files.

Consumes the artifacts a run directory accumulates (``metrics.csv``,
``trainlog.csv``, ``sweep_metrics.csv``) and writes a merged plot-ready CSV
next to PNG figures. Everything is file-to-file; there is no interactive UI.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pipeline import read_artifact, write_artifact

_FIG_DPI = 120


def _plot_metrics(rows: list[list[str]], out_path: str) -> None:
    """Grouped bars: one group per (task, C_or_k), one bar per metric."""
    groups: dict[tuple[str, str], dict[str, float]] = {}
    for task, c_or_k, metric, value in rows:
        groups.setdefault((task, c_or_k), {})[metric] = float(value)
    if not groups:
        return
    keys = sorted(groups)
    metrics = sorted({m for g in groups.values() for m in g})
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(1.8 + 1.2 * len(keys), 3.6))
    for i, metric in enumerate(metrics):
        xs = [j + i * width for j in range(len(keys))]
        ys = [groups[k].get(metric, 0.0) for k in keys]
        ax.bar(xs, ys, width=width, label=metric)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(keys))])
    ax.set_xticklabels([f"{task}\n{c}" for task, c in keys], fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=_FIG_DPI)
    plt.close(fig)


def _plot_trainlog(rows: list[list[str]], out_path: str) -> None:
    """Loss and held-out F1 curves, one panel per training phase."""
    phases: dict[str, tuple[list[int], list[float], list[float]]] = {}
    for phase, epoch, loss, f1 in rows:
        epochs, losses, f1s = phases.setdefault(phase, ([], [], []))
        epochs.append(int(epoch))
        losses.append(float(loss))
        f1s.append(float(f1))
    if not phases:
        return
    fig, axes = plt.subplots(1, len(phases), figsize=(4.0 * len(phases), 3.4), squeeze=False)
    for ax, phase in zip(axes[0], phases):
        epochs, losses, f1s = phases[phase]
        ax.plot(epochs, losses, label="train loss", color="tab:red")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(phase)
        twin = ax.twinx()
        twin.plot(epochs, f1s, label="held-out F1", color="tab:blue")
        twin.set_ylim(0.0, 1.05)
        twin.set_ylabel("F1")
    fig.tight_layout()
    fig.savefig(out_path, dpi=_FIG_DPI)
    plt.close(fig)


def _plot_sweep(rows: list[list[str]], out_path: str) -> None:
    """Metric-vs-parameter-value lines for classification and clustering."""
    series: dict[tuple[str, str, str], list[tuple[str, float]]] = {}
    param_name = rows[0][0] if rows else ""
    for param, value, task, c_or_k, metric, score in rows:
        series.setdefault((task, c_or_k, metric), []).append((value, float(score)))
    if not series:
        return
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for (task, c_or_k, metric), points in sorted(series.items()):
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, marker="o", label=f"{task} {c_or_k} {metric}")
    ax.set_xlabel(param_name)
    ax.set_ylabel("score")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=_FIG_DPI)
    plt.close(fig)


def run_report(run_dir: str, out_dir: str) -> list[str]:
    """Merge every metrics table under ``run_dir`` and render figures.

    Returns the list of files written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    merged: list[list[str]] = []

    for name in sorted(os.listdir(run_dir)):
        if name == "metrics.csv":
            _, _, rows = read_artifact(os.path.join(run_dir, name))
            merged.extend([["", ""] + row for row in rows])
            fig = os.path.join(out_dir, "metrics.png")
            _plot_metrics(rows, fig)
            written.append(fig)
        elif name == "trainlog.csv":
            _, _, rows = read_artifact(os.path.join(run_dir, name))
            fig = os.path.join(out_dir, "training_curves.png")
            _plot_trainlog(rows, fig)
            written.append(fig)
        elif name == "sweep_metrics.csv":
            _, _, rows = read_artifact(os.path.join(run_dir, name))
            merged.extend(rows)
            fig = os.path.join(out_dir, "sweep.png")
            _plot_sweep(rows, fig)
            written.append(fig)

    merged_path = os.path.join(out_dir, "report.csv")
    write_artifact(merged_path, ["param", "value", "task", "C_or_k", "metric", "score"], merged, {})
    written.append(merged_path)
    return written
