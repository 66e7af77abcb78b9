"""Matplotlib renderings of the report tables, written next to the CSVs."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def report_figure(reports, path) -> None:
    """Grouped bars of fooling percentage and MAPE per (model, attack) row."""
    labels = [f"{r.model_id}\n{r.attack_id}" for r in reports]
    xs = np.arange(len(reports))
    fig, axes = plt.subplots(1, 2, figsize=(max(6, 1.4 * len(reports)), 3.2))
    axes[0].bar(xs, [r.fooling_pct for r in reports], color="firebrick")
    axes[0].set_ylabel("fooling %")
    axes[1].bar(xs, [r.mape for r in reports], color="steelblue")
    axes[1].set_ylabel("MAPE %")
    for ax in axes:
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_xlabel("victim / attack")
    _save(fig, path)


def sweep_figure(result, path) -> None:
    """Fooling percentage and MAPE against perturbation strength, log x."""
    eps = [p.epsilon for p in result.points]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(eps, [p.fooling_pct for p in result.points], "o-", label="fooling %")
    ax.plot(eps, [p.mape for p in result.points], "s--", label="MAPE %")
    if all(e > 0 for e in eps):
        ax.set_xscale("log")
    ax.set_xlabel("perturbation strength (L-inf bound)")
    ax.set_ylabel("percent")
    ax.legend()
    _save(fig, path)


def trajectory_figure(rows, path) -> None:
    """True, clean-predicted and attacked-predicted RUL over engine life."""
    engines = sorted({r.engine_id for r in rows})
    fig, axes = plt.subplots(len(engines), 1, figsize=(6, 2.6 * len(engines)), squeeze=False)
    for ax, eid in zip(axes[:, 0], engines):
        sub = [r for r in rows if r.engine_id == eid]
        cycles = [r.end_cycle for r in sub]
        ax.plot(cycles, [r.y for r in sub], "k-", label="true RUL")
        ax.plot(cycles, [r.pred_clean for r in sub], "b-", label="predicted")
        ax.plot(cycles, [r.pred_attacked for r in sub], "r--", label="attacked")
        ax.set_title(f"engine {eid}", fontsize=9)
        ax.set_xlabel("cycle")
        ax.set_ylabel("RUL")
        ax.legend(fontsize=7)
    _save(fig, path)


def fleet_figure(rows, path) -> None:
    """Per-engine last-window predictions before and after the attack."""
    xs = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6, 0.08 * len(rows)), 3.2))
    ax.plot(xs, [r.y for r in rows], "k.", label="true RUL")
    ax.plot(xs, [r.pred_clean for r in rows], "b.", label="predicted")
    ax.plot(xs, [r.pred_attacked for r in rows], "r.", label="attacked")
    ax.set_xlabel("test engine (ordinal)")
    ax.set_ylabel("RUL at last window")
    ax.legend(fontsize=8)
    _save(fig, path)


def trace_figure(rows: Sequence[tuple], path, max_features: int = 12) -> None:
    """Clean vs perturbed input traces, one panel per sensor."""
    features: list[str] = []
    for r in rows:
        if r[2] not in features:
            features.append(r[2])
    features = features[:max_features]
    ncols = 3
    nrows = (len(features) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(9, 2.0 * nrows), squeeze=False)
    for k, feat in enumerate(features):
        ax = axes[k // ncols][k % ncols]
        sub = [r for r in rows if r[2] == feat]
        cycles = [r[1] for r in sub]
        ax.plot(cycles, [r[3] for r in sub], "b-", lw=0.8, label="original")
        ax.plot(cycles, [r[4] for r in sub], "r-", lw=0.8, label="perturbed")
        ax.set_title(feat, fontsize=8)
        ax.tick_params(labelsize=6)
    for k in range(len(features), nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    axes[0][0].legend(fontsize=6)
    _save(fig, path)
