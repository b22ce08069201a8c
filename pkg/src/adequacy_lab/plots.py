"""Figure rendering for the report path.

Consumes the study/timing/coverage data the analysis layer emits and
writes PNG figures next to the delimited output.  Kept out of the metric
modules on purpose: those emit CSV/JSON only, and this is the plotter
that feeds on them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_study_scatter(records, out_path: Path) -> Path:
    """Scatter of dispersion and coverage against mutation score, plus accuracy."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    ms = [r.mutation_score for r in records]
    panels = [
        ("lscd", [r.lscd for r in records], "dispersion"),
        ("dsc", [r.dsc for r in records], "surprise coverage"),
        ("accuracy", [r.accuracy for r in records], "accuracy"),
    ]
    for ax, (key, ys, label) in zip(axes, panels):
        ax.scatter(ms, ys, s=18, alpha=0.8)
        ax.set_xlabel("mutation score")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_coverage_history(histories: dict[str, list[float]], out_path: Path) -> Path:
    """Coverage-vs-iteration curves, one line per criterion."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, hist in sorted(histories.items()):
        ax.plot(range(len(hist)), hist, label=name)
    ax.set_xlabel("fuzz iteration")
    ax.set_ylabel("coverage")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_timing(records, out_path: Path) -> Path:
    """Bar chart of median wall time per (metric, mode, workers)."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    labels = [f"{t.metric}\n{t.mode}\nw={t.worker_count}" for t in records]
    times = [t.wall_time_ms for t in records]
    ax.bar(range(len(records)), times)
    ax.set_xticks(range(len(records)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("wall time (ms)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
