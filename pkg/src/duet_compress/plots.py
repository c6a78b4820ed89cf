"""Report figures rendered to PNG bytes.

Rendering never touches the filesystem; callers decide where the bytes
land, which keeps output writes atomic.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .budget import BudgetReport  # noqa: E402


def _to_png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def budget_figure(report: BudgetReport) -> bytes:
    """Token count per layer as a staircase with the average marked."""
    fig, ax = plt.subplots(figsize=(7, 4))
    layers = range(1, report.total_layers + 1)
    ax.step(layers, report.per_layer, where="post", lw=2)
    ax.axhline(report.average, ls="--", color="tab:red", lw=1,
               label=f"avg = {report.average:.6g}")
    ax.set_xlabel("layer")
    ax.set_ylabel("visual tokens")
    ax.set_title(f"n0={report.n0}, schedule {report.schedule_text}")
    ax.legend()
    ax.grid(alpha=0.3)
    return _to_png(fig)


def sweep_figure(axis: str, rows, metric: str) -> bytes:
    """Metric vs. sweep value; failed rows are skipped."""
    ok = [(r.value, r.metric) for r in rows if r.metric is not None]
    fig, ax = plt.subplots(figsize=(7, 4))
    if ok:
        labels = [v for v, _ in ok]
        ys = [m for _, m in ok]
        try:
            xs = [float(v) for v in labels]
            ax.plot(xs, ys, marker="o")
        except ValueError:
            ax.plot(range(len(ys)), ys, marker="o")
            ax.set_xticks(range(len(ys)), labels, rotation=30, ha="right")
    ax.set_xlabel(axis)
    ax.set_ylabel(metric)
    ax.set_title(f"{metric} over {axis}")
    ax.grid(alpha=0.3)
    return _to_png(fig)


def heatmap_figure(matrix, title: str) -> bytes:
    """Salient-rows-by-token attention heat."""
    fig, ax = plt.subplots(figsize=(7, 3))
    im = ax.imshow(matrix, aspect="auto", interpolation="nearest", cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel("visual token")
    ax.set_ylabel("salient text row")
    ax.set_title(title)
    return _to_png(fig)
