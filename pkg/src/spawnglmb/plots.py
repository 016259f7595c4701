"""Report figures rendered alongside the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_cardinality_figure(path, scans, truth, mean, std) -> None:
    fig, ax = plt.subplots(figsize=(7.5, 3.6))
    ax.step(scans, truth, where="mid", color="k", lw=1.2, label="truth")
    ax.plot(scans, mean, color="C0", lw=1.2, label="estimated mean")
    ax.fill_between(
        scans,
        np.asarray(mean) - np.asarray(std),
        np.asarray(mean) + np.asarray(std),
        color="C0",
        alpha=0.25,
        label="±1 std",
    )
    ax.set_xlabel("scan")
    ax.set_ylabel("cardinality")
    ax.legend(loc="upper left", fontsize=8)
    ax.set_xlim(scans[0], scans[-1])
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_ospa_figure(path, scans, total, loc, card, cutoff) -> None:
    fig, axes = plt.subplots(3, 1, figsize=(7.5, 6.4), sharex=True)
    for ax, series, name in zip(axes, (total, loc, card), ("total", "localization", "cardinality")):
        ax.plot(scans, series, lw=1.0, color="C0")
        ax.set_ylabel(f"OSPA {name} (m)")
        ax.set_ylim(0, cutoff)
    axes[-1].set_xlabel("scan")
    axes[0].set_xlim(scans[0], scans[-1])
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trajectories_figure(path, tracks, region) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 6.4))
    for t in tracks:
        xy = t.states[:, :2]
        ax.plot(xy[:, 0], xy[:, 1], lw=0.9)
        ax.scatter(*xy[0], marker="o", facecolors="none", edgecolors="k", s=36, zorder=3)
        marker = "^" if t.death_scan <= len(t.states) + t.birth_scan else None
        if marker:
            ax.scatter(*xy[-1], marker="^", facecolors="none", edgecolors="k", s=36, zorder=3)
        if t.label.generation > 0:
            ax.scatter(*xy[0], marker="s", facecolors="none", edgecolors="r", s=60, zorder=3)
    ax.set_xlim(region[0])
    ax.set_ylim(region[1])
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_ancestry_figure(path, records, truth, region) -> None:
    """Event-time grid for one birth region across Monte Carlo runs."""
    recs = [r for r in records if r.region == region]
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    for rec in recs:
        y = rec.run
        if rec.birth_time is not None:
            ax.scatter(rec.birth_time, y, marker="o", color="tab:red", s=12)
        if rec.death_time is not None:
            ax.scatter(rec.death_time, y, marker="^", color="plum", s=12)
        if rec.gen1_spawn_time is not None:
            ax.scatter(rec.gen1_spawn_time, y, marker="s", color="tab:green", s=12)
        if rec.gen2_spawn_time is not None:
            ax.scatter(rec.gen2_spawn_time, y, marker="D", color="gold", s=12)
        if rec.no_spawn:
            ax.scatter(truth.horizon, y, marker="*", color="k", s=26)
        marker_scan = truth.gen2_times.get(region, truth.horizon)
        if rec.origin_error:
            ax.scatter(marker_scan, y, marker="<", color="tab:blue", s=26)
        if rec.label_switch:
            ax.scatter(marker_scan, y, marker=">", color="gray", s=26)
    if region in truth.gen1_times:
        ax.axvline(truth.gen1_times[region], color="tab:green", lw=0.8, ls="--")
    if region in truth.gen2_times:
        ax.axvline(truth.gen2_times[region], color="gold", lw=0.8, ls="--")
    ax.set_xlabel("scan")
    ax.set_ylabel("run")
    ax.set_title(f"birth region {region}: estimated event times")
    ax.set_xlim(0, truth.horizon + 1)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
