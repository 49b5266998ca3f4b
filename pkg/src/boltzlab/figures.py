"""Headless matplotlib renderings written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .measure import DiscreteMeasure


def _finish(fig, path) -> str:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def save_cdf_overlay(curves: list[tuple[str, DiscreteMeasure]], path, title: str = "") -> str:
    """Step plot of one or more CDFs on a shared axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, mu in curves:
        x = np.concatenate(([0.0], mu.locations))
        y = np.concatenate(([0.0], np.cumsum(mu.weights)))
        ax.step(x, y, where="post", label=label, lw=1.2)
    ax.set_xlabel("x")
    ax.set_ylabel("F(x)")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def save_gap_series(series: dict[str, list[float]], path, title: str = "") -> str:
    """Semilog plot of per-iteration gap diagnostics."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in series.items():
        vals = np.asarray(values, dtype=float)
        ax.semilogy(np.arange(1, vals.size + 1), np.maximum(vals, 1e-300), label=label, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("gap")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    return _finish(fig, path)


def save_time_series(times, series: dict[str, list[float]], path, title: str = "", logy: bool = False) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    t = np.asarray(times, dtype=float)
    for label, values in series.items():
        vals = np.asarray(values, dtype=float)
        if logy:
            ax.semilogy(t, np.maximum(vals, 1e-300), label=label, lw=1.2)
        else:
            ax.plot(t, vals, label=label, lw=1.2)
    ax.set_xlabel("t")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def save_potential(breakpoints, values, path, title: str = "optimal potential") -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.asarray(breakpoints), np.asarray(values), lw=1.2)
    ax.set_xlabel("x")
    ax.set_ylabel("f(x)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return _finish(fig, path)
