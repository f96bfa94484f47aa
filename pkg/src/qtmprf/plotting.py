"""Figures for sweep and constraint reports (written to files, never shown)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .constraints import CONSTRAINTS, EXPECTED, METHODS, ConstraintReport  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def map_curve(results, axis: str, path, xlabel: str | None = None):
    """Best MAP over all other axes as a function of one sweep axis, per method.

    ``results`` is a list of :class:`~qtmprf.experiment.SweepResult`.
    """
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for res in results:
        values = {}
        for point, score in zip(res.points, res.map_by_point()):
            if axis not in point or point[axis] is None:
                continue
            values[point[axis]] = max(score, values.get(point[axis], -np.inf))
        if not values:
            continue
        xs = sorted(values)
        ax.plot(xs, [values[x] for x in xs], marker="o", label=res.method)
    ax.set_xlabel(xlabel or axis)
    ax.set_ylabel("MAP")
    ax.grid(alpha=0.3)
    if ax.lines:
        ax.legend(fontsize=8)
    return _save(fig, path)


def constraint_heatmap(report: ConstraintReport, path):
    """Adherence matrix; cells differing from the expected table are outlined."""
    matrix = report.matrix()
    data = np.array([[1.0 if v else 0.0 for v in matrix[m]] for m in METHODS])
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.imshow(data, cmap="RdYlGn", vmin=-0.3, vmax=1.3, aspect="auto")
    ax.set_xticks(range(len(CONSTRAINTS)), CONSTRAINTS)
    ax.set_yticks(range(len(METHODS)), METHODS)
    for i, m in enumerate(METHODS):
        for j, _ in enumerate(CONSTRAINTS):
            ax.text(j, i, "yes" if data[i, j] else "no", ha="center", va="center", fontsize=9)
            if bool(data[i, j]) != EXPECTED[m][j]:
                ax.add_patch(plt.Rectangle((j - 0.5, i - 0.5), 1, 1, fill=False, lw=2.5, ec="black"))
    ax.set_title(f"constraint adherence (seed {report.seed})", fontsize=10)
    return _save(fig, path)
