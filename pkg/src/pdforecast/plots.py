"""Figure rendering for the report path. All figures go to PNG files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataset import UPDRS_COLS  # noqa: E402

plt.rcParams.update({
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def save_loss_curves(history, path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    epochs = np.arange(1, len(history.entries) + 1)
    tr = [e[0] for e in history.entries]
    va = [e[1] for e in history.entries]
    ax.plot(epochs, tr, label="train")
    ax.plot(epochs, va, label="validation")
    if history.best_epoch:
        ax.axvline(history.best_epoch, color="gray", ls="--", lw=0.8,
                   label=f"best epoch {history.best_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE loss (standardized targets)")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_pred_scatter(report, path, title: str) -> None:
    fig, axes = plt.subplots(2, 2, figsize=(7, 6.5))
    by_target = {name: ([], []) for name in UPDRS_COLS}
    for name, actual, predicted in report.predictions:
        by_target[name][0].append(actual)
        by_target[name][1].append(predicted)
    for ax, name in zip(axes.flat, UPDRS_COLS):
        actual, predicted = by_target[name]
        ax.scatter(actual, predicted, s=8, alpha=0.5)
        lo = min(actual + predicted, default=0.0)
        hi = max(actual + predicted, default=1.0)
        ax.plot([lo, hi], [lo, hi], color="gray", lw=0.8)
        m = report.per_target[name]
        ax.set_title(f"{name} (SMAPE {m.smape:.1f})")
        ax.set_xlabel("actual")
        ax.set_ylabel("predicted")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_correlation_heatmap(names, corr, path) -> None:
    fig, ax = plt.subplots(figsize=(0.6 * len(names) + 2,
                                    0.6 * len(names) + 1.5))
    im = ax.imshow(corr, vmin=-1, vmax=1, cmap="RdBu_r")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.grid(False)
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, f"{corr[i, j]:.2f}", ha="center", va="center",
                    fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title("Correlation of UPDRS scores and visit month")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_kde_curves(curves, path) -> None:
    """curves: dict peptide -> dict group -> DensityEstimate."""
    n = len(curves)
    fig, axes = plt.subplots(1, n, figsize=(3 * n, 2.8), squeeze=False)
    for ax, (peptide, groups) in zip(axes.flat, curves.items()):
        for group, est in groups.items():
            ax.plot(est.grid, est.density, label=group)
        ax.set_title(peptide[:14], fontsize=8)
        ax.set_xlabel("total UPDRS")
        ax.legend(frameon=False, fontsize=7)
    axes.flat[0].set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
