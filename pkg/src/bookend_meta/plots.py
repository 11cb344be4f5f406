"""Forest-plot rendering to a vector-graphic file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STUDY_COLOR = "#777777"
MODEL_COLORS = {"standard-fe": "#1f77b4", "standard-re": "#2ca02c", "bookend": "#d62728"}


@dataclass(frozen=True)
class ForestRow:
    label: str
    estimate: float
    lo: float
    hi: float
    color: str


def forest_plot(
    path: str | Path,
    study_rows: list[ForestRow],
    model_rows: list[ForestRow],
    xlabel: str = "log odds ratio",
    title: str | None = None,
) -> Path:
    """Render study estimates above pooled-model rows, null line at zero.

    Interval whiskers are 95% bands (confidence for studies, credible for
    models); marker area does not encode weight. Output format follows the
    file suffix; pass an .svg path for the standard vector output.
    """
    path = Path(path)
    rows = list(study_rows) + list(model_rows)
    if not rows:
        raise ValueError("nothing to plot")
    n = len(rows)
    height = max(2.4, 0.55 * n + 1.4)
    fig, ax = plt.subplots(figsize=(7.2, height))

    ys = []
    y = n + (0.6 if model_rows else 0.0)  # gap between study and model blocks
    for i, row in enumerate(rows):
        if i == len(study_rows):
            y -= 0.6
        ax.plot([row.lo, row.hi], [y, y], color=row.color, lw=1.6, zorder=2)
        marker = "s" if i < len(study_rows) else "D"
        ax.scatter([row.estimate], [y], color=row.color, marker=marker, s=42, zorder=3)
        ys.append(y)
        y -= 1.0

    ax.axvline(0.0, color="black", lw=0.9, ls="--", zorder=1)
    ax.set_yticks(ys)
    ax.set_yticklabels([r.label for r in rows])
    ax.set_xlabel(xlabel)
    if title:
        ax.set_title(title)
    for side in ("top", "right", "left"):
        ax.spines[side].set_visible(False)
    ax.tick_params(axis="y", length=0)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
