"""Matplotlib figures for the report commands.  All functions write a file and return its path."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG output byte-identical across reruns
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_tap_shift(rows: list[dict], path, title: str = "per-tap shift") -> Path:
    """EMD and |delta mean| per tap, flagged taps marked."""
    taps = np.array([r["tap"] for r in rows])
    emd = np.array([r["emd"] for r in rows])
    dm = np.array([r["delta_mean"] for r in rows])
    flagged = np.array([r["flagged"] for r in rows], dtype=bool)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.plot(taps, emd, label="EMD", lw=1.2)
    ax.plot(taps, dm, label="|Δ mean|", lw=1.0, ls="--")
    if flagged.any():
        ax.scatter(taps[flagged], emd[flagged], s=10, c="r", zorder=3, label="flagged")
    ax.set_xlabel("tap")
    ax.set_ylabel("shift")
    ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_history(history: list[dict], path) -> Path:
    """Loss components and schedules of one training phase."""
    if not history:
        raise ValueError("empty history")
    ep = [h["epoch"] for h in history]
    loss_keys = [k for k in ("L_rec", "L_reg", "L_dom", "val_L_rec") if k in history[0]]
    sched_keys = [k for k in ("lambda", "alpha", "lambda_ft", "AUC") if k in history[0]]
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    for k in loss_keys:
        axes[0].plot(ep, [h[k] for h in history], label=k)
    if loss_keys:
        axes[0].set_yscale("log")
    axes[0].set_xlabel("epoch")
    axes[0].set_title(f"{history[0]['phase']} losses")
    for k in sched_keys:
        axes[1].plot(ep, [h[k] for h in history], label=k)
    if "lr" in history[0]:
        axes[1].plot(ep, [h["lr"] / max(h2["lr"] for h2 in history) if h["lr"] else 0 for h in history],
                     label="lr (rel.)", ls=":")
    axes[1].set_xlabel("epoch")
    axes[1].set_title("schedules")
    for ax in axes:
        if ax.get_legend_handles_labels()[1]:
            ax.legend(frameon=False)
    return _save(fig, path)


def plot_importance(mean_rank: list[tuple[str, float]], path) -> Path:
    names = [f for f, _ in mean_rank]
    ranks = [r for _, r in mean_rank]
    fig, ax = plt.subplots(figsize=(6, 0.3 * len(names) + 1))
    ax.barh(names[::-1], ranks[::-1])
    ax.set_xlabel("mean rank (1 = most informative)")
    return _save(fig, path)


def plot_zones(coords, zones, centroids, path) -> Path:
    coords = np.asarray(coords, float)
    fig, ax = plt.subplots(figsize=(4, 5))
    ax.scatter(coords[:, 0], coords[:, 1], c=zones, s=6, cmap="tab10")
    c = np.asarray(centroids)
    ax.scatter(c[:, 0], c[:, 1], marker="x", c="k", s=50)
    ax.set_xlabel("x (cm)")
    ax.set_ylabel("y (cm)")
    ax.set_aspect("equal")
    return _save(fig, path)


def plot_errors(preds, truths, path, title: str = "") -> Path:
    """Predicted vs true positions plus the empirical error CDF."""
    p, t = np.asarray(preds, float), np.asarray(truths, float)
    err = np.sort(np.linalg.norm(p - t, axis=1))
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].scatter(t[:, 0], t[:, 1], s=30, marker="s", facecolors="none", edgecolors="k", label="true")
    axes[0].scatter(p[:, 0], p[:, 1], s=4, alpha=0.5, label="predicted")
    axes[0].set_aspect("equal")
    axes[0].legend(frameon=False)
    axes[1].plot(err, np.arange(1, len(err) + 1) / len(err))
    axes[1].axvline(30, color="grey", ls=":")
    axes[1].set_xlabel("error (cm)")
    axes[1].set_ylabel("CDF")
    fig.suptitle(title)
    return _save(fig, path)
