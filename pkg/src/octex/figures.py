"""Render per-field precision figures alongside the delimited eval output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from octex.fields import Eye, ReportKind, field_names  # noqa: E402
from octex.scoring import PrecisionRow, display_label  # noqa: E402


def render_precision_figure(
    rows: list[PrecisionRow], kind: ReportKind, out_path: str | Path
) -> Path:
    """Horizontal bar chart of OD/OS precision per field, table-ordered.

    Undefined precision (zero detections) renders as an absent bar with a
    "n/a" annotation; detected counts annotate each bar.
    """
    by_key = {(r.field.name, r.field.eye): r for r in rows}
    names = [n for n in field_names(kind) if (n, Eye.OD) in by_key]
    labels = [display_label(n) for n in names]
    y = range(len(names))

    fig, ax = plt.subplots(figsize=(8.0, 0.42 * len(names) + 1.6))
    bar_h = 0.38
    for offset, eye, color in ((-bar_h / 2, Eye.OD, "#4878a8"), (bar_h / 2, Eye.OS, "#c38820")):
        values = [by_key[(n, eye)].precision for n in names]
        counts = [by_key[(n, eye)].detected for n in names]
        pos = [yy + offset for yy in y]
        ax.barh(
            pos,
            [v if v is not None else 0.0 for v in values],
            height=bar_h,
            color=color,
            label=eye.value,
        )
        for yy, v, c in zip(pos, values, counts):
            text = "n/a" if v is None else f"{v:.4f} (n={c})"
            ax.annotate(
                text,
                xy=((v or 0.0) + 0.01, yy),
                va="center",
                fontsize=7,
            )

    ax.set_yticks(list(y))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.18)
    ax.set_xlabel("precision")
    ax.set_title(f"{kind.value.upper()} extraction precision per field")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()

    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
