"""Static SVG figures for runs and sweeps (matplotlib, headless backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps the SVG bytes identical across reruns.
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "gatlab"}):
        fig.savefig(path, format="svg", metadata=_SVG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def seed_lines_svg(summary, path) -> Path:
    """ME and TPR against the seed index, one line per variant."""
    fig, (ax_me, ax_tpr) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for v in summary.variants:
        if v not in summary.me:
            continue
        idx = np.arange(len(summary.me[v]))
        ax_me.plot(idx, summary.me[v], marker=".", lw=1, label=v)
        ax_tpr.plot(idx, summary.tpr[v], marker=".", lw=1, label=v)
    ax_me.set_ylabel("ME")
    ax_tpr.set_ylabel("TPR")
    ax_tpr.set_xlabel("seed index")
    ax_tpr.set_ylim(-0.02, 1.02)
    ax_me.legend(fontsize="small")
    return _save(fig, path)


def boxplots_svg(summary, path) -> Path:
    """Side-by-side boxplots of ME and TPR per variant."""
    names = [v for v in summary.variants if v in summary.me]
    fig, (ax_me, ax_tpr) = plt.subplots(1, 2, figsize=(2 + 1.6 * len(names), 4))
    ax_me.boxplot([summary.me[v] for v in names], whis=1.5)
    ax_tpr.boxplot([summary.tpr[v] for v in names], whis=1.5)
    for ax, title in ((ax_me, "ME"), (ax_tpr, "TPR")):
        ax.set_xticks(range(1, len(names) + 1), names, rotation=30, ha="right")
        ax.set_title(title)
    return _save(fig, path)


def histogram_svg(hist, path, title: str = "") -> Path:
    """Bar chart of a confidence histogram (relative frequency per bin)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(hist.centers, hist.freq, width=0.09)
    ax.set_xlim(0, 1)
    ax.set_xlabel("attention on the true neighbor")
    ax.set_ylabel("relative frequency")
    if hist.empty:
        ax.text(0.5, 0.5, "no correctly selected samples", ha="center", transform=ax.transAxes)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def loss_svg(trace, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(1, len(trace) + 1), trace)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    return _save(fig, path)
