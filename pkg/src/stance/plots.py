"""Static figure output for the analyze command."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_overlap_heatmap(names: Sequence[str], matrix: np.ndarray, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(0.6 * len(names) + 2, 0.6 * len(names) + 2))
    image = ax.imshow(matrix, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=90)
    ax.set_yticks(range(len(names)), names)
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title("vocabulary overlap (row covered by column)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_scatter(
    names: Sequence[str],
    points: np.ndarray,
    centroids: Mapping[str, np.ndarray],
    path: str | Path,
) -> None:
    fig, ax = plt.subplots(figsize=(8, 8))
    unique = sorted(set(names))
    cmap = plt.get_cmap("tab20")
    for i, dataset in enumerate(unique):
        rows = [j for j, name in enumerate(names) if name == dataset]
        ax.scatter(points[rows, 0], points[rows, 1], s=4, alpha=0.35, color=cmap(i % 20), label=dataset)
    for i, dataset in enumerate(unique):
        if dataset in centroids:
            cx, cy = centroids[dataset]
            ax.scatter([cx], [cy], s=90, color=cmap(i % 20), edgecolor="black", zorder=3)
            ax.annotate(dataset, (cx, cy), fontsize=8, weight="bold")
    ax.set_title("encoder map of sampled examples")
    ax.legend(markerscale=3, fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_label_projection(names: Sequence[str], points: np.ndarray, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(9, 7))
    ax.scatter(points[:, 0], points[:, 1], s=14, color="tab:blue")
    for name, (x, y) in zip(names, points):
        ax.annotate(name, (x, y), fontsize=7)
    ax.set_title("label-name embeddings (2-D projection)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_correlation_bars(correlations: Mapping[str, float], path: str | Path) -> None:
    items = [(k, v) for k, v in correlations.items() if v == v]  # drop NaN
    items.sort(key=lambda kv: kv[1])
    labels = [k for k, _ in items]
    values = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(8, 0.3 * len(items) + 2))
    ax.barh(range(len(items)), values, color="tab:purple")
    ax.set_yticks(range(len(items)), labels, fontsize=8)
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("Pearson r against macro-F1")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
