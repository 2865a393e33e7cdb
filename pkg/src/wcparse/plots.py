"""Figures written next to the TSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .curriculum import StepRecord  # noqa: E402
from .evaluation import Comparison, EvalReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "wcparse",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def _smooth(y: np.ndarray, width: int) -> np.ndarray:
    if len(y) < width or width < 2:
        return y
    kernel = np.ones(width) / width
    return np.convolve(y, kernel, mode="valid")


def plot_history(records: Sequence[StepRecord], task_ids: Sequence[str], path: str | Path) -> Path:
    """Training loss, loss summaries and which task the trainer picked at every step."""
    steps = np.array([r.step for r in records])
    loss = np.array([r.loss for r in records])
    l1 = np.array([r.l1 for r in records])
    linf = np.array([r.linf for r in records])
    row = {t: i for i, t in enumerate(task_ids)}
    chosen = np.array([row.get(r.trainer_task, -1) for r in records])
    width = max(1, len(records) // 50)

    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_task) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        sm = _smooth(loss, width)
        ax_loss.plot(steps[len(steps) - len(sm) :], sm, label="trained batch loss", color="k", lw=1)
        ax_loss.plot(steps, linf, label=r"$L^\infty$ of latest task losses", lw=0.8)
        ax_loss.plot(steps, l1 / max(len(task_ids), 1), label=r"$L^1$ / n", lw=0.8)
        ax_loss.set_ylabel("loss")
        ax_loss.legend(frameon=False)
        ax_task.scatter(steps, chosen, s=2, marker="|", color="C3")
        ax_task.set_yticks(range(len(task_ids)))
        ax_task.set_yticklabels(task_ids)
        ax_task.set_xlabel("step")
        ax_task.set_ylabel("trainer task")
        return _save(fig, path)


def plot_report(report: EvalReport, path: str | Path) -> Path:
    names = list(report.per_treebank)
    las = [report.per_treebank[t].las for t in names]
    uas = [report.per_treebank[t].uas for t in names]
    x = np.arange(len(names))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 2), 3))
        ax.bar(x - 0.2, uas, width=0.4, label="UAS", color="0.7")
        ax.bar(x + 0.2, las, width=0.4, label="LAS", color="C0")
        ax.axhline(report.macro_average_las, color="C0", ls="--", lw=0.8, label="macro LAS")
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=45, ha="right")
        ax.set_ylim(0, 100)
        ax.set_ylabel("score (%)")
        ax.legend(frameon=False, ncol=3, loc="upper left")
        return _save(fig, path)


def plot_comparison(comparison: Comparison, path: str | Path) -> Path:
    """Per-treebank relative error reduction of the second report over the first."""
    base, ours = comparison.base, comparison.ours
    with np.errstate(divide="ignore", invalid="ignore"):
        rer = np.where(base < 100, 100 * (ours - base) / (100 - base), 0.0)
    x = np.arange(len(comparison.treebanks))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(x) + 2), 3))
        ax.bar(x, rer, color=np.where(rer >= 0, "C2", "C3"))
        ax.axhline(0, color="k", lw=0.6)
        ax.set_xticks(x)
        ax.set_xticklabels(comparison.treebanks, rotation=45, ha="right")
        ax.set_ylabel("RER (%)")
        ax.set_title(
            f"macro {comparison.base_avg:.1f} -> {comparison.ours_avg:.1f}, "
            f"delta {comparison.delta:.1f}, RER {comparison.rer:.1f}, p={comparison.p_value:.3f}"
        )
        return _save(fig, path)
