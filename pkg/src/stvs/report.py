"""CSV and figure rendering for CLI outputs.

Every delimited report the CLI writes gets a matplotlib figure rendered
next to it (same stem, .png). Rendering uses the Agg backend so it works
headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

import numpy as np  # noqa: E402

from .bench import BenchReport  # noqa: E402
from .metrics import EvalRecord  # noqa: E402


def figure_path_for(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def write_loss_curve_csv(losses: np.ndarray, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(losses):
            writer.writerow([step, f"{loss:.10g}"])


def render_loss_curve(losses: np.ndarray, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(losses)), losses, lw=1.2)
    if len(losses) and np.all(np.asarray(losses) > 0):
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("temporal module overfit")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_bench_csv(reports: list[BenchReport], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["op", "shape", "trials", "fast_ns", "naive_ns",
                         "speedup", "equivalence_max_rel_err", "copy_ns"])
        for r in reports:
            writer.writerow([r.op, r.shape, r.trials, f"{r.fast_ns:.1f}",
                             f"{r.naive_ns:.1f}", f"{r.speedup:.4f}",
                             f"{r.equivalence_max_rel_err:.3e}",
                             "" if r.copy_ns is None else f"{r.copy_ns:.1f}"])


def render_bench(reports: list[BenchReport], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [f"{r.op}\n{r.shape}" for r in reports]
    x = np.arange(len(reports))
    width = 0.38
    ax.bar(x - width / 2, [r.fast_ns / 1e6 for r in reports], width, label="fast")
    ax.bar(x + width / 2, [r.naive_ns / 1e6 for r in reports], width, label="naive")
    ax.set_xticks(x, labels, fontsize=8)
    ax.set_ylabel("median ms")
    ax.set_yscale("log")
    ax.set_title("fast vs naive path")
    ax.legend()
    for xi, r in zip(x, reports):
        ax.annotate(f"{r.speedup:.1f}x", (xi, max(r.fast_ns, r.naive_ns) / 1e6),
                    ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval(record: EvalRecord, path) -> None:
    rows = record.rows()
    names = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(names)), 4))
    x = np.arange(len(names))
    width = 0.28
    ax.bar(x - width, [r[1] for r in rows], width, label="F-max")
    ax.bar(x, [r[2] for r in rows], width, label="S-measure")
    ax.bar(x + width, [r[3] for r in rows], width, label="MAE")
    ax.set_xticks(x, names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_title("saliency metrics")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
