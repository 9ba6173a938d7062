"""Matplotlib figures written next to the CSV/JSON reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed palette so a vertical keeps its color across figures.
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#bcbd22", "#000000", "#7f7f7f", "#17becf", "#e377c2"]
_META = {"Software": None}


def _color(i):
    return COLORS[i % len(COLORS)]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_history(history, path, title="Training"):
    """Mean loss per checkpoint, with top-1 on a twin axis when recorded."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(history.steps, history.losses, color="k", lw=1.5, label="mean loss")
    ax.set_xlabel("step")
    ax.set_ylabel("mean loss")
    ax.set_title(title)
    top = [(c.step, c.top1) for c in history.checkpoints if c.top1 is not None]
    if top:
        ax2 = ax.twinx()
        ax2.plot(*zip(*top), color=_color(1), lw=1.5, label="top-1")
        ax2.set_ylabel("top-1 accuracy")
        ax2.set_ylim(0, 1.02)
    _finish(fig, path)


def plot_accuracy_vs_k(report, path, title="Top-k accuracy"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, v in enumerate(report.verticals):
        ax.plot(report.ks, [report.accuracy(v, k) for k in report.ks], marker="o", color=_color(i), label=v)
    ax.set_xlabel("k")
    ax.set_ylabel("top-k accuracy")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend(fontsize=8, frameon=False)
    _finish(fig, path)


def plot_projection(coords, verticals, path, title="PCA projection"):
    fig, ax = plt.subplots(figsize=(5, 5))
    names = sorted(set(verticals))
    for i, v in enumerate(names):
        mask = [u == v for u in verticals]
        pts = coords[mask]
        ax.scatter(pts[:, 0], pts[:, 1], s=6, color=_color(i), label=v, alpha=0.7)
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_title(title)
    ax.legend(fontsize=8, frameon=False, markerscale=2)
    _finish(fig, path)


def plot_comparison(reports, k, path, title=None):
    """Grouped bars of top-k per vertical for several labelled reports."""
    labels = list(reports)
    verticals = reports[labels[0]].verticals
    width = 0.8 / len(labels)
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(verticals)), 3.5))
    for j, name in enumerate(labels):
        xs = [i + j * width for i in range(len(verticals))]
        ax.bar(xs, [reports[name].accuracy(v, k) for v in verticals], width, color=_color(j), label=name)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(verticals))])
    ax.set_xticklabels(verticals)
    ax.set_ylabel(f"top-{k} accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title(title or f"top-{k} comparison")
    ax.legend(fontsize=8, frameon=False)
    _finish(fig, path)
