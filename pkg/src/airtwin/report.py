"""Figure rendering for pipeline reports.

All figures go straight to PNG files through the Agg backend with pinned
size/dpi, so repeated runs on the same inputs produce identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PolyCollection

from .decision import SensitivityRow
from .features import SelectionTrace
from .geo import ZoneSet

DPI = 150


def save_correlation_heatmap(
    corr: np.ndarray, names: Sequence[str], path: str | Path
) -> Path:
    n = len(names)
    size = max(6.0, 0.32 * n)
    fig, ax = plt.subplots(figsize=(size, size * 0.9))
    im = ax.imshow(corr, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_yticklabels(names, fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8, label="Pearson r")
    ax.set_title("Feature correlation matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def write_correlation_csv(
    corr: np.ndarray, names: Sequence[str], path: str | Path
) -> Path:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", *names])
        for name, row in zip(names, corr):
            writer.writerow([name, *[repr(float(v)) for v in row]])
    return Path(path)


def save_importance_bars(
    importances: Mapping[str, float], path: str | Path, title: str = "Feature importance"
) -> Path:
    items = sorted(importances.items(), key=lambda kv: kv[1])
    names = [k for k, _ in items]
    vals = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(7, max(3.0, 0.28 * len(names))))
    ax.barh(range(len(names)), vals, color="#3b6ea5")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("importance (higher is better)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_choropleth(
    zones: ZoneSet,
    values: np.ndarray,
    path: str | Path,
    title: str,
    value_label: str = "NO2 (ug/m3)",
    cmap: str = "viridis",
) -> Path:
    polys = [np.asarray(z.polygon[:-1]) for z in zones.zones]
    vals = np.asarray(values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7.5, 6.5))
    coll = PolyCollection(polys, array=vals, cmap=cmap, edgecolors="white", linewidths=0.4)
    ax.add_collection(coll)
    allv = np.concatenate(polys)
    ax.set_xlim(allv[:, 0].min(), allv[:, 0].max())
    ax.set_ylim(allv[:, 1].min(), allv[:, 1].max())
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    fig.colorbar(coll, ax=ax, shrink=0.85, label=value_label)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_sensitivity_curve(rows: Sequence[SensitivityRow], path: str | Path) -> Path:
    sds = [r.noise_sd for r in rows]
    means = [r.mean_agreement for r in rows]
    sems = [r.sd_agreement for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.errorbar(sds, means, yerr=sems, marker="o", capsize=3, color="#a5443b")
    ax.set_xlabel("synthetic error sd (ug/m3)")
    ax.set_ylabel("decision agreement rate")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Decision agreement vs synthetic-data error")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def save_selection_curve(trace: SelectionTrace, start_count: int, path: str | Path) -> Path:
    counts = [start_count - i - 1 for i in range(len(trace.steps))]
    accs = [s.cv_accuracy_after for s in trace.steps]
    stds = [s.std_after for s in trace.steps]
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.errorbar(counts, accs, yerr=stds, marker="o", capsize=3, color="#2d7a4f")
    ax.invert_xaxis()
    ax.set_xlabel("features remaining")
    ax.set_ylabel("cv accuracy (%)")
    ax.set_title("Recursive feature elimination")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)
