"""Figure rendering for the CLI report paths.

Every command that writes delimited output also renders a small
matplotlib figure next to it; the library evaluation/training modules
stay figure-free and these helpers consume their in-memory results.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 120


def save_training_curves(log, path) -> None:
    """Loss and probe-accuracy curves for one training run."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(log.epochs, log.train_losses, marker="o", color="tab:red")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean training loss")
    ax1.grid(alpha=0.3)
    ax2.plot(log.epochs, log.clean_accs, marker="o", label="clean")
    ax2.plot(log.epochs, log.adv_accs, marker="s", label="adversarial probe")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy (%)")
    ax2.set_ylim(0, 100)
    ax2.legend()
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_report_bars(report, path, title: str | None = None) -> None:
    """Horizontal accuracy bars, one per report row."""
    names = [r.attack for r in report.rows]
    accs = [r.accuracy for r in report.rows]
    fig, ax = plt.subplots(figsize=(7, 0.6 * len(names) + 1.4))
    ypos = np.arange(len(names))[::-1]
    bars = ax.barh(ypos, accs, color="tab:blue")
    ax.set_yticks(ypos, names)
    ax.set_xlim(0, 100)
    ax.set_xlabel("accuracy (%)")
    ax.bar_label(bars, fmt="%.1f")
    if title:
        ax.set_title(title)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_sweep_curve(report, path, axis: str) -> None:
    """Accuracy against budget along one sweep axis."""
    budgets = [r.eps_pixel if axis == "pixel" else r.eps_spatial for r in report.rows]
    accs = [r.accuracy for r in report.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(budgets, accs, marker="o")
    unit = "[-1,1] units" if axis == "pixel" else "pixels"
    ax.set_xlabel(f"{axis} budget ({unit})")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_example_grid(clean, adversarial, path, count: int = 8) -> None:
    """Clean / adversarial image pairs, one column per example."""
    count = min(count, len(clean))
    fig, axes = plt.subplots(2, count, figsize=(1.2 * count, 2.8))
    axes = np.atleast_2d(axes)
    for col in range(count):
        for row, batch in enumerate((clean, adversarial)):
            ax = axes[row, col]
            img = np.asarray(batch[col])
            ax.imshow((img[..., 0] + 1) / 2, cmap="gray", vmin=0, vmax=1)
            ax.set_xticks([])
            ax.set_yticks([])
    axes[0, 0].set_ylabel("clean")
    axes[1, 0].set_ylabel("adversarial")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
