"""Matplotlib renderings of the standard result tables.

Every figure is written next to its CSV by the ``report`` command; nothing
here is needed for the data path.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def render_histogram(path, pred, mc_hist=None, title="Coincidence histogram"):
    fig, ax = plt.subplots(figsize=(7, 4))
    x = pred.bin_centers_ns() / 1000.0
    if mc_hist is not None:
        xm = mc_hist.bin_centers_ns() / 1000.0
        ax.bar(xm, mc_hist.counts, width=mc_hist.bin_size_ns / 1000.0,
               color="firebrick", alpha=0.55, label="simulated coincidences")
        ax.plot(xm, mc_hist.accidental_counts, "k-", lw=1.5,
                label="simulated accidentals")
        scale = (mc_hist.n_conditional_trials or 1)
    else:
        scale = 1.0
    ax.plot(x, pred.expected * scale, "C0-", lw=1.2, label="predicted")
    ax.plot(x, pred.accidental * scale, "C0--", lw=1.0,
            label="predicted accidentals")
    ax.set_xlabel(r"$T_S + T_{AS}$ ($\mu$s)")
    ax.set_ylabel("coincidences")
    ax.set_xlim(0, x.max())
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_g2_vs_ps(path, ps_percent, g2_analytic, rate_analytic,
                    ps_mc=None, g2_mc=None, g2_mc_sigma=None):
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(ps_percent, g2_analytic, "C0-", label="model")
    if ps_mc is not None:
        ax1.errorbar(ps_mc, g2_mc, yerr=g2_mc_sigma, fmt="s", color="C0",
                     ms=5, capsize=3, label="simulation")
    ax1.axhline(2.0, color="gray", ls=":", lw=1, label="classical bound")
    ax1.set_xscale("log")
    ax1.set_xlabel(r"$P_S$ (% per $\mu$s)")
    ax1.set_ylabel(r"$g^{(2)}_{S,AS}$", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(ps_percent, rate_analytic, "C3--", label="coincidence rate")
    ax2.set_ylabel("coincidences per hour", color="C3")
    ax1.legend(frameon=False, fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_fringes(path, phases_rad, curves, points=None):
    """curves: {label: values}; points: {label: (phases, counts, sigmas)}."""
    fig, ax = plt.subplots(figsize=(6, 4))
    deg = np.degrees(phases_rad)
    for i, (label, vals) in enumerate(curves.items()):
        ax.plot(deg, vals, f"C{i}-", label=label)
    if points:
        for i, (label, (ph, c, s)) in enumerate(points.items()):
            ax.errorbar(np.degrees(ph), c, yerr=s, fmt=f"C{i}o", ms=4, capsize=2)
    ax.set_xlabel(r"$\Phi_{AS}$ (degrees)")
    ax.set_ylabel("central-peak coincidences")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_s_scans(path, window_scan=None, binsize_scan=None):
    n = sum(x is not None for x in (window_scan, binsize_scan))
    fig, axes = plt.subplots(1, max(n, 1), figsize=(6 * max(n, 1), 4))
    if n == 1:
        axes = [axes]
    i = 0
    if window_scan is not None:
        ax = axes[i]
        pts = [p for p in window_scan.points if p.defined]
        x = [p.x / 1000.0 for p in pts]
        ax.errorbar(x, [p.s for p in pts], yerr=[p.sigma for p in pts],
                    fmt="o-", ms=4, capsize=2)
        ax.axhline(2.0, color="gray", ls=":")
        ax.set_xlabel(r"window center ($\mu$s)")
        ax.set_ylabel("S")
        i += 1
    if binsize_scan is not None:
        ax = axes[i]
        pts = [p for p in binsize_scan.points if p.defined]
        x = [p.x / 1000.0 for p in pts]
        ax.errorbar(x, [p.s for p in pts], yerr=[p.sigma for p in pts],
                    fmt="s-", color="C3", ms=4, capsize=2)
        ax.axhline(2.0, color="gray", ls=":")
        ax.set_xlabel(r"window width ($\mu$s)")
        ax.set_ylabel("S")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_g2_vs_width(path, rows):
    fig, ax1 = plt.subplots(figsize=(6, 4))
    w = [r["width_ns"] / 1000.0 for r in rows]
    ax1.errorbar(w, [r["g2"] for r in rows], yerr=[r["sigma"] for r in rows],
                 fmt="o-", color="C3", ms=4, capsize=2, label=r"$g^{(2)}$")
    ax1.set_xlabel(r"coincidence window width ($\mu$s)")
    ax1.set_ylabel(r"$g^{(2)}_{S,AS}$", color="C3")
    ax2 = ax1.twinx()
    ax2.plot(w, [r["coincidence_rate"] for r in rows], "C0s--",
             ms=4, label="coincidences")
    ax2.plot(w, [r["accidental_rate"] for r in rows], "k^--",
             ms=4, label="accidentals")
    unit = rows[0]["rate_unit"].replace("_", " ") if rows else ""
    ax2.set_ylabel(f"rate ({unit})")
    ax2.legend(frameon=False, fontsize=8, loc="center right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
