"""Figures: phase-binned base height and training curves."""
from __future__ import annotations

import csv

import numpy as np

from .metrics import condition_labels, phase_binned_base_height


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_base_height(records, path, conditions=None, smooth=9):
    """Base height over the locomotion cycle, one line per terrain condition."""
    plt = _pyplot()
    if conditions is None:
        seen = []
        for r in records:
            for c in condition_labels(r.get("scenario", "rigid"), r.get("base_depth")):
                if c not in seen:
                    seen.append(c)
        conditions = seen
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for c in conditions:
        try:
            ang, h, _ = phase_binned_base_height(records, c)
        except ValueError:
            continue
        if smooth > 1:
            good = np.isfinite(h)
            hs = np.where(good, h, 0.0)
            k = np.ones(smooth)
            num = np.convolve(np.r_[hs[-smooth:], hs, hs[:smooth]], k, "same")[smooth:-smooth]
            den = np.convolve(np.r_[good[-smooth:], good, good[:smooth]].astype(float), k, "same")[smooth:-smooth]
            h = np.where(den > 0, num / np.maximum(den, 1), np.nan)
        ax.plot(ang, 100 * h, label=c)
    ax.set_xlim(0, 2 * np.pi)
    ax.set_xticks(np.arange(5) * np.pi / 2)
    ax.set_xticklabels(["0", "π/2", "π", "3π/2", "2π"])
    for x in np.arange(1, 4) * np.pi / 2:
        ax.axvline(x, color="0.8", lw=0.8)
    ax.set_xlabel("phase angle (FL, RR, FR, RL swing)")
    ax.set_ylabel("base height h_b (cm)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_training(csv_path, path):
    plt = _pyplot()
    rows = list(csv.DictReader(open(csv_path, newline="")))
    if not rows:
        raise ValueError(f"{csv_path} has no rows")
    u = [int(r["update"]) for r in rows]

    def col(k):
        return [float(r[k]) if r[k] not in ("", None) else np.nan for r in rows]

    fig, axes = plt.subplots(1, 3, figsize=(11, 3))
    axes[0].plot(u, col("mean_return"))
    axes[0].set_ylabel("mean episode return")
    axes[1].plot(u, col("mean_length"))
    axes[1].set_ylabel("mean episode length (phases)")
    axes[2].plot(u, col("mean_distance"))
    axes[2].set_ylabel("mean distance (m)")
    for ax in axes:
        ax.set_xlabel("update")
    stages = [int(r["stage"]) for r in rows]
    for i in range(1, len(stages)):
        if stages[i] != stages[i - 1]:
            for ax in axes:
                ax.axvline(u[i], color="0.6", ls="--")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
