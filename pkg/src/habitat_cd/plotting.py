"""Figures written next to the CSV/JSON reports.

Everything renders with the non-interactive Agg backend into PNG files.
PNG metadata is stripped of the software/version stamp so re-running a
config yields identical figure bytes on the same matplotlib build.
"""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 6.5

params = {
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# Largest side, in pixels, of a label map drawn to file.
MAX_MAP_SIDE = 1200


@contextmanager
def style():
    with plt.rc_context(params):
        yield


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def _short(name: str, n: int = 28) -> str:
    return name if len(name) <= n else name[: n - 1] + "…"


def plot_confusion(counts: np.ndarray, names: Sequence[str], path, title: str = "") -> Path:
    """Row-normalised confusion heatmap (rows = reference)."""
    counts = np.asarray(counts, dtype=np.float64)
    rows = counts.sum(axis=1, keepdims=True)
    frac = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    k = len(names)
    side = min(fig_width, 1.2 + 0.35 * k)
    with style():
        fig, ax = plt.subplots(figsize=(side + 1.2, side))
        im = ax.imshow(frac, cmap="viridis", vmin=0, vmax=1)
        ax.set_xticks(range(k), [_short(n, 18) for n in names], rotation=90)
        ax.set_yticks(range(k), [_short(n) for n in names])
        ax.set_xlabel("Predicted")
        ax.set_ylabel("Reference")
        if k <= 12:
            for i in range(k):
                for j in range(k):
                    ax.text(j, i, f"{frac[i, j]:.2f}", ha="center", va="center",
                            color="w" if frac[i, j] < 0.6 else "k", fontsize=6)
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="Share of reference")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_per_class(report, path, title: str = "") -> Path:
    """Grouped horizontal bars of IoU, F1 and recall per class."""
    names = [_short(m.name) for m in report.per_class]
    metrics = {
        "IoU": [m.iou for m in report.per_class],
        "F1": [m.f1 for m in report.per_class],
        "Recall": [m.recall for m in report.per_class],
    }
    y = np.arange(len(names))
    h = 0.27
    with style():
        fig, ax = plt.subplots(figsize=(fig_width, max(2.0, 0.3 * len(names) + 1)))
        for i, (label, vals) in enumerate(metrics.items()):
            vals = [np.nan if v is None else v for v in vals]
            ax.barh(y + (i - 1) * h, vals, height=h, label=label)
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        ax.set_xlim(0, 1)
        ax.set_xlabel("Score")
        ax.legend(loc="lower right", frameon=False)
        ax.set_title(title or f"OA {report.overall_accuracy:.2f}, "
                              f"macro IoU {report.macro_iou:.2f}, macro F1 {report.macro_f1:.2f}")
        return _save(fig, path)


def plot_label_map(grid, names: Sequence[str], path, title: str = "") -> Path:
    """Categorical map with a legend; nodata is left blank."""
    band = grid.bands[0]
    step = max(1, int(np.ceil(max(grid.shape) / MAX_MAP_SIDE)))
    values = band.values[::step, ::step].astype(np.float64)
    values[~band.valid_mask()[::step, ::step]] = np.nan
    k = len(names)
    base = plt.get_cmap("tab20" if k > 10 else "tab10")
    cmap = ListedColormap([base(i % base.N) for i in range(k)])
    x0, y0, x1, y1 = grid.extent
    with style():
        fig, ax = plt.subplots(figsize=(fig_width, fig_width * golden_mean))
        ax.imshow(values, cmap=cmap, vmin=-0.5, vmax=k - 0.5, interpolation="nearest",
                  extent=(x0, x1, y0, y1))
        handles = [plt.Rectangle((0, 0), 1, 1, color=cmap(i)) for i in range(k)]
        ax.legend(handles, [_short(n) for n in names], loc="center left",
                  bbox_to_anchor=(1.02, 0.5), frameon=False, ncol=1 if k <= 12 else 2)
        ax.set_xlabel("Easting (m)")
        ax.set_ylabel("Northing (m)")
        ax.ticklabel_format(useOffset=False, style="plain")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_ablation(rows: Sequence[dict], path, title: str = "Modality ablation") -> Path:
    """Lines of OA / macro IoU / macro F1 over the modality ladder."""
    labels = [r["modalities"] for r in rows]
    x = np.arange(len(rows))
    with style():
        fig, ax = plt.subplots(figsize=(fig_width, fig_width * golden_mean))
        for prefix, marker in (("change", "o"), ("segmentation", "s")):
            for metric, ls in (("overall_accuracy", "-"), ("macro_iou", "--"), ("macro_f1", ":")):
                vals = [r.get(f"{prefix}_{metric}") for r in rows]
                if all(v is None for v in vals):
                    continue
                vals = [np.nan if v is None else v for v in vals]
                ax.plot(x, vals, ls, marker=marker, label=f"{prefix} {metric.replace('_', ' ')}")
        ax.set_xticks(x, labels, rotation=15)
        ax.set_ylim(0, 1)
        ax.set_ylabel("Score")
        ax.legend(frameon=False, fontsize=6)
        ax.set_title(title)
        return _save(fig, path)
