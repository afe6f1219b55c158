"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRIC_LABELS = {
    "pixel_acc": "pixel acc.",
    "mean_acc": "mean acc.",
    "mean_iu": "mean IU",
    "fw_iu": "f.w. IU",
}

SWEEP_XLABELS = {
    "kernels": "number of kernels",
    "layers": "number of conv layers",
    "train_images": "number of training images",
}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_log(log, path, window: int = 50) -> None:
    """Per-batch loss with a moving average, plus validation accuracy if logged."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        x = np.asarray(log.batch_index)
        y = np.asarray(log.mean_loss)
        if len(y):
            ax.plot(x, y, color="0.75", lw=0.6, label="batch loss")
            if len(y) >= window:
                smooth = np.convolve(y, np.ones(window) / window, mode="valid")
                ax.plot(x[window - 1 :], smooth, color="C0", lw=1.2, label=f"mean of {window}")
        ax.set_xlabel("batch")
        ax.set_ylabel("cross-entropy")
        if log.validation:
            ax2 = ax.twinx()
            vx = sorted(log.validation)
            ax2.plot(vx, [log.validation[v] for v in vx], "o-", color="C3", ms=3, label="val. pixel acc.")
            ax2.set_ylabel("validation pixel acc.")
            ax2.set_ylim(0, 1)
        if len(y):
            ax.legend(loc="upper right", frameon=False)
        _save(fig, path)


def plot_sweep(kind: str, rows: list[dict], path) -> None:
    """Metrics against the swept value; f.w. IU drawn heaviest."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        xs = [r["sweep_value"] for r in rows]
        for key, label in METRIC_LABELS.items():
            lw, alpha = (1.8, 1.0) if key == "fw_iu" else (0.9, 0.6)
            ax.plot(xs, [100 * r[key] for r in rows], "o-", ms=3, lw=lw, alpha=alpha, label=label)
        ax.set_xticks(xs)
        ax.set_xlabel(SWEEP_XLABELS.get(kind, kind))
        ax.set_ylabel("%")
        ax.legend(frameon=False, ncol=2)
        _save(fig, path)


def plot_confusion(cm, names, path) -> None:
    """Row-normalized confusion matrix (rows: ground truth)."""
    counts = cm.counts.astype(float)
    rows = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
    with plt.rc_context(RC):
        n = len(names)
        fig, ax = plt.subplots(figsize=(1.0 + 0.7 * n, 0.8 + 0.7 * n))
        ax.imshow(norm, vmin=0, vmax=1, cmap="Blues")
        for i in range(n):
            for j in range(n):
                ax.text(j, i, f"{norm[i, j]:.2f}", ha="center", va="center",
                        color="white" if norm[i, j] > 0.5 else "black", fontsize=7)
        ax.set_xticks(range(n), names, rotation=45, ha="right")
        ax.set_yticks(range(n), names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("ground truth")
        _save(fig, path)
