"""Matplotlib renderings written next to each report's delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .policy import PolicyTables

_GAIN_COLORS = {
    "active_sdg_vs_active_dg": "tab:blue",
    "passive_sdg_vs_passive_dg": "tab:orange",
    "active_sdg_vs_passive_dg": "tab:olive",
    "passive_sdg_vs_active_dg": "tab:purple",
}


def save_policy_curves(path: str | Path, tables: PolicyTables, points: int = 800) -> None:
    """Decision curves (consumption, storage, net) over the renewable axis."""
    thr = tables.thresholds
    g_hi = max(1.0, thr.delta_minus * 1.25)
    g = np.linspace(0.0, g_hi, points)
    batch = tables.decide_batch(g)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(g, batch.consumption.sum(axis=1), label="total consumption")
    ax.plot(g, batch.storage, label="storage action")
    ax.plot(g, batch.net, label="net consumption")
    for name, x in zip(
        ("$\\Delta^+$", "$\\sigma^+$", "$\\sigma^{+o}$", "$\\sigma^{-o}$",
         "$\\sigma^-$", "$\\Delta^-$"),
        thr.as_tuple(),
    ):
        if x >= 0:
            ax.axvline(x, color="0.8", lw=0.8, zorder=0)
            ax.annotate(name, (x, ax.get_ylim()[1]), fontsize=8,
                        ha="center", va="bottom")
    ax.axhline(0.0, color="0.5", lw=0.6)
    ax.set_xlabel("renewable output (kWh/interval)")
    ax.set_ylabel("kWh/interval")
    ax.legend(loc="upper left", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_soc_profile(path: str | Path, soc: np.ndarray, dt_hours: float) -> None:
    """State-of-charge trajectory over the horizon."""
    hours = np.arange(len(soc)) * dt_hours
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(hours / 24.0, soc, lw=0.8)
    ax.set_xlabel("day")
    ax.set_ylabel("state of charge (kWh)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_comparison(path: str | Path, table) -> None:
    """Grouped bars: surplus gain over the consumer, per netting window."""
    rows = [r for r in table.rows if r.customer_type != "consumer"]
    labels = [
        f"{r.customer_type}\n{r.storage_rate_kw:g} kW" if r.storage_rate_kw else
        r.customer_type
        for r in rows
    ]
    x = np.arange(len(rows))
    width = 0.8 / max(1, len(table.nettings))
    fig, ax = plt.subplots(figsize=(max(7, 1.1 * len(rows)), 4))
    for j, n in enumerate(table.nettings):
        vals = [r.gains[n] for r in rows]
        ax.bar(x + j * width, vals, width, label=f"netting {n}")
    ax.set_xticks(x + width * (len(table.nettings) - 1) / 2)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("surplus gain over consumer (%)")
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_sweep(path: str | Path, sweep) -> None:
    """Value-of-storage curves along the swept parameter."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    xs = [r.value for r in sweep.rows if not r.skipped]
    for key, color in _GAIN_COLORS.items():
        ys = [r.gains.get(key, float("nan")) for r in sweep.rows if not r.skipped]
        if xs:
            ax.plot(xs, ys, marker="o", ms=3, color=color,
                    label=key.replace("_vs_", " vs ").replace("_", " "))
    ax.set_xlabel(sweep.parameter.replace("_", " "))
    ax.set_ylabel("surplus gain (%)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
