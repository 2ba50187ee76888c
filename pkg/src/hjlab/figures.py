"""Matplotlib rendering for the CLI report path.

Figures are written next to the delimited output with a non-interactive
backend; styling is kept deliberately plain.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

plt.rcParams.update(
    {
        "figure.figsize": (6.0, 3.8),
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 10,
        "axes.linewidth": 0.8,
    }
)


def save(fig, out_dir: str, stem: str) -> str:
    path = os.path.join(out_dir, f"{stem}.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def refinement_figure(rows, out_dir: str, stem: str) -> str:
    """Tree values and gap against dt; errors vs a closed form if present."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    dts = [r.dt for r in rows]
    axes[0].plot(dts, [r.rho_lower for r in rows], "o-", label="lower value")
    axes[0].plot(dts, [r.rho_upper for r in rows], "s--", label="upper value")
    axes[0].set_xlabel("dt")
    axes[0].set_ylabel("tree value")
    axes[0].invert_xaxis()
    axes[0].legend()
    if rows and rows[0].err_lower is not None:
        axes[1].loglog(dts, [max(r.err_lower, 1e-17) for r in rows], "o-", label="|lower - closed form|")
        axes[1].loglog(dts, [max(r.err_upper, 1e-17) for r in rows], "s--", label="|upper - closed form|")
        axes[1].set_ylabel("error")
    else:
        axes[1].semilogx(dts, [r.gap for r in rows], "o-", label="upper - lower gap")
        axes[1].set_ylabel("gap")
    axes[1].set_xlabel("dt")
    axes[1].legend()
    return save(fig, out_dir, stem)


def smoothing_figure(ks, distances, out_dir: str, stem: str) -> str:
    fig, ax = plt.subplots()
    ax.loglog(ks, [max(d, 1e-17) for d in distances], "o-")
    ax.set_xlabel("Steklov index k")
    ax.set_ylabel("L1 distance to the base Hamiltonian")
    return save(fig, out_dir, stem)


def ledger_figure(times, ledger, out_dir: str, stem: str) -> str:
    fig, ax = plt.subplots()
    ax.plot(times, ledger, "-")
    ax.set_xlabel("time")
    ax.set_ylabel("characteristic conservation ledger")
    return save(fig, out_dir, stem)
