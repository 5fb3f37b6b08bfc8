"""Figure rendering for the experiment harness.

Each command that writes a CSV also drops a PNG next to it: learning
curves, per-link AoI evolution, discrete/continuous action traces, and
sweep summaries. Uses the Agg backend so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_learning_curves",
    "plot_aoi_trace",
    "plot_action_traces",
    "plot_sweep",
]

_DPI = 150


def plot_learning_curves(curves_by_seed: dict[int, list[dict]], path) -> None:
    """Per-seed mean AoI and return vs. training episode."""
    fig, (ax_aoi, ax_ret) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for seed, rows in sorted(curves_by_seed.items()):
        episodes = [r["episode"] for r in rows]
        ax_aoi.plot(episodes, [r["mean_aoi"] for r in rows], label=f"seed {seed}",
                    alpha=0.8)
        ax_ret.plot(episodes, [r["mean_return"] for r in rows], alpha=0.8)
    ax_aoi.set_ylabel("mean AoI [ms]")
    ax_aoi.legend(loc="upper right", fontsize=8)
    ax_ret.set_ylabel("episode return")
    ax_ret.set_xlabel("episode")
    for ax in (ax_aoi, ax_ret):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_aoi_trace(aoi_trace: np.ndarray, slot_ms: float, path,
                   title: str = "Receiver AoI per link") -> None:
    """(N, M) AoI trace in slots -> step plot per link in ms."""
    n, m = aoi_trace.shape
    fig, ax = plt.subplots(figsize=(7, 4))
    slots = np.arange(n)
    for link in range(m):
        ax.step(slots, aoi_trace[:, link] * slot_ms, where="post",
                label=f"link {link + 1}", alpha=0.85)
    ax.set_xlabel("slot")
    ax.set_ylabel("AoI [ms]")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_action_traces(gamma_trace: np.ndarray, power_trace: np.ndarray,
                       p_max_mw: float, path) -> None:
    """Keep/drop decisions (scatter) and transmit powers (lines) per link."""
    n, m = gamma_trace.shape
    fig, (ax_g, ax_p) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    slots = np.arange(n)
    for link in range(m):
        drop_slots = slots[gamma_trace[:, link] == 0]
        ax_g.scatter(drop_slots, np.full(len(drop_slots), link + 1), s=8,
                     label=f"link {link + 1}")
        ax_p.plot(slots, power_trace[:, link], alpha=0.85)
    ax_g.set_yticks(range(1, m + 1))
    ax_g.set_ylim(0.5, m + 0.5)
    ax_g.set_ylabel("drop events (link)")
    ax_g.grid(alpha=0.3)
    if m <= 8:
        ax_g.legend(fontsize=7, loc="upper right")
    ax_p.set_ylim(0.0, 1.05 * p_max_mw)
    ax_p.set_ylabel("transmit power [mW]")
    ax_p.set_xlabel("slot")
    ax_p.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_sweep(axis_name: str, values, mean_aoi_ms, path,
               errors=None) -> None:
    """Mean AoI against the sweep axis, optional error bars."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if errors is not None:
        ax.errorbar(values, mean_aoi_ms, yerr=errors, marker="o", capsize=3)
    else:
        ax.plot(values, mean_aoi_ms, marker="o")
    ax.set_xlabel(axis_name)
    ax.set_ylabel("mean AoI [ms]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
