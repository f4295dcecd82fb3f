"""Static SVG figures for training logs, metric sweeps and single scenes."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from scattersense.metrics import MetricsReport  # noqa: E402

METRIC_LABELS = {"f1": "F1", "pd": "Pd", "precision": "Precision", "rmse": "RMSE (m)"}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_training_log(rows: Sequence[dict], path) -> Path:
    """Loss terms and validation metrics against the epoch."""
    epochs = [r["epoch"] for r in rows]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax0.semilogy(epochs, [r["loc_loss"] for r in rows], label="localization")
    ax0.semilogy(epochs, [r["obj_loss"] for r in rows], label="objectness")
    ax0.set_xlabel("epoch")
    ax0.set_ylabel("training loss")
    ax0.legend()
    for key in ("val_f1", "val_pd"):
        pts = [(r["epoch"], r[key]) for r in rows if r.get(key) is not None]
        if pts:
            ax1.plot(*zip(*pts), marker=".", label=METRIC_LABELS[key[4:]])
    ax1.set_xlabel("epoch")
    ax1.set_ylim(0, 1)
    ax1.set_ylabel("validation")
    ax1.legend(loc="lower right")
    return _save(fig, path)


def _x_value(rep: MetricsReport, key: str):
    v = rep.tags.get(key)
    if key == "snr_db" and v is None:
        return math.inf
    if isinstance(v, (list, tuple)):
        return v[0] if v[0] == v[-1] else f"{v[0]}-{v[-1]}"
    return v


def plot_metric_sweep(reports: Sequence[MetricsReport], x_key: str, path, series_key: str = "method") -> Path:
    """F1, Pd and RMSE against one condition tag, one line per ``series_key``.

    An infinite SNR (noiseless) is drawn at the right edge and labelled.
    """
    series: dict[str, list[tuple]] = defaultdict(list)
    for rep in reports:
        series[str(rep.tags.get(series_key, "-"))].append((_x_value(rep, x_key), rep))
    xs = sorted({x for pts in series.values() for x, _ in pts}, key=lambda v: (isinstance(v, str), v))
    numeric = all(isinstance(x, (int, float)) for x in xs)
    finite = [x for x in xs if numeric and math.isfinite(x)]
    inf_pos = (max(finite) + max(5.0, (max(finite) - min(finite)) / 4)) if finite else 0.0

    def place(x):
        if not numeric:
            return xs.index(x)
        return inf_pos if math.isinf(x) else x

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    for name, pts in sorted(series.items()):
        pts = sorted(pts, key=lambda p: place(p[0]))
        for ax, metric in zip(axes, ("f1", "pd", "rmse")):
            ax.plot([place(x) for x, _ in pts], [getattr(r, metric) for _, r in pts], marker="o", label=name)
    ticks = [place(x) for x in xs]
    labels = ["inf" if numeric and math.isinf(x) else str(x) for x in xs]
    for ax, metric in zip(axes, ("f1", "pd", "rmse")):
        ax.set_xticks(ticks, labels)
        ax.set_xlabel(x_key)
        ax.set_ylabel(METRIC_LABELS[metric])
        if metric != "rmse":
            ax.set_ylim(0, 1.02)
    axes[0].legend(fontsize="small")
    return _save(fig, path)


def plot_scene(scene, estimates: Sequence[tuple[float, float]], path, title: str | None = None) -> Path:
    """True scatters, estimates, BS and UE in the x-y plane."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    true = scene.scatter_array()
    if len(true):
        ax.scatter(true[:, 0], true[:, 1], marker="o", facecolors="none", edgecolors="k", label="true")
    if len(estimates):
        ex, ey = zip(*estimates)
        ax.scatter(ex, ey, marker="x", color="tab:red", label="estimated")
    ax.scatter(*scene.bs_pos, marker="^", color="tab:blue", label="BS")
    ax.scatter(*scene.ue_pos, marker="s", color="tab:green", label="UE")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small", loc="best")
    return _save(fig, path)
