"""Matplotlib figure helpers for the report paths.

Figures are plain summaries written next to the delimited outputs; every
helper takes explicit data and a target path so reruns with the same inputs
produce the same files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_error_curve(path, curves: dict, title: str, threshold: float | None = None):
    """Feature error vs control step, one line per labeled run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in curves.items():
        ax.plot(np.arange(len(values)), values, label=str(label), linewidth=1.2)
    if threshold is not None:
        ax.axhline(threshold, color="gray", linestyle="--", linewidth=0.9, label="stop threshold")
    ax.set_xlabel("control step")
    ax.set_ylabel("feature error (L2)")
    ax.set_title(title)
    if len(curves) > 1 or threshold is not None:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=110)
    plt.close(fig)


def save_sweep_lines(path, rows: list, title: str):
    """Velocity error vs dictionary size, one line per alpha.

    ``rows`` are (n_dic, alpha, error) triples.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    alphas = sorted({r[1] for r in rows})
    for alpha in alphas:
        pts = sorted((r[0], r[2]) for r in rows if r[1] == alpha)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=4, linewidth=1.2, label=f"alpha={alpha:g}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("dictionary size")
    ax.set_ylabel("held-out velocity error")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=110)
    plt.close(fig)


def save_pred_scatter(path, groups: dict, title: str):
    """Predicted vs recorded velocity components, one color per split."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    lim = 0.0
    for label, (actual, predicted) in groups.items():
        a = np.asarray(actual).ravel()
        p = np.asarray(predicted).ravel()
        ax.scatter(a, p, s=6, alpha=0.45, label=str(label), edgecolors="none")
        if a.size:
            lim = max(lim, float(np.max(np.abs(a))), float(np.max(np.abs(p))))
    lim = lim * 1.05 if lim > 0 else 1.0
    ax.plot([-lim, lim], [-lim, lim], color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_xlabel("recorded velocity component (m/s)")
    ax.set_ylabel("predicted velocity component (m/s)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=110)
    plt.close(fig)


def save_success_bars(path, rates: dict, title: str):
    """Success rate per feature set."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    labels = list(rates)
    values = [rates[k] for k in labels]
    ax.bar(np.arange(len(labels)), values, width=0.6, color="#4878a8")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("success rate")
    ax.set_title(title)
    for i, v in enumerate(values):
        ax.text(i, v + 0.02, f"{v:.2f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=110)
    plt.close(fig)


def save_l1_curve(path, alphas, l1_norms, threshold_alpha: float, title: str):
    """Coefficient mass vs alpha with the analytic deactivation point."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(alphas, l1_norms, marker="o", markersize=4, linewidth=1.2)
    ax.axvline(threshold_alpha, color="gray", linestyle="--", linewidth=0.9,
               label="deactivation threshold")
    ax.set_xscale("log")
    ax.set_xlabel("alpha")
    ax.set_ylabel("|beta|_1")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=110)
    plt.close(fig)
