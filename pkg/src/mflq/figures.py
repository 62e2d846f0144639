"""Figure rendering for the command-line reports.

Kept out of the computational modules on purpose: the library emits
data, and only the CLI turns data into pictures. Imported lazily by the
commands so that library users never pay for matplotlib.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mfsim import TrajectoryEnsemble
from .riccati_finite import FiniteHorizonSolution
from .turnpike_lab import CesaroTable, TurnpikeReport


def render_finite_solution(path: str, sol: FiniteHorizonSolution) -> None:
    """Backward quantities and feedback gains against time."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    t = sol.grid
    n = sol.model.n
    for i in range(n):
        ax1.plot(t, sol.P[:, i, i], label=f"P[{i},{i}]")
        ax1.plot(t, sol.Pi[:, i, i], linestyle="--", label=f"Pi[{i},{i}]")
    ax1.set_xlabel("t")
    ax1.set_title("Riccati diagonals")
    ax1.legend(fontsize=8)
    m = sol.model.m
    for i in range(m):
        for j in range(n):
            ax2.plot(t, sol.Theta[:, i, j], label=f"Theta[{i},{j}]")
            ax2.plot(t, sol.ThetaBar[:, i, j], linestyle="--",
                     label=f"ThetaBar[{i},{j}]")
        ax2.plot(t, sol.theta[:, i], linestyle=":", label=f"theta[{i}]")
    ax2.set_xlabel("t")
    ax2.set_title("Feedback gains")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_turnpike(path: str, report: TurnpikeReport) -> None:
    """Gap series on log scale, with the pair deviation when present."""
    two = report.pair is not None
    fig, axes = plt.subplots(1, 2 if two else 1, figsize=(10 if two else 6, 4),
                             squeeze=False)
    ax = axes[0, 0]
    g = report.gains
    for name, gap in g.gaps.items():
        visible = np.maximum(gap, 1e-17)
        ax.semilogy(g.grid, visible, label=name)
    ax.set_xlabel("t")
    ax.set_title("Gap to stationary quantities")
    ax.legend(fontsize=8)
    if two:
        ax = axes[0, 1]
        pr = report.pair
        ax.semilogy(pr.grid, np.maximum(pr.state_gap, 1e-17), label="state gap")
        ax.semilogy(pr.grid, np.maximum(pr.control_gap, 1e-17),
                    label="control gap")
        for key, style in (("state", "--"), ("control", ":")):
            f = pr.fits.get(key)
            if f is not None and f.ok:
                ax.semilogy(pr.grid, np.maximum(f.predict(pr.grid), 1e-17),
                            style, alpha=0.7, label=f"{key} fit")
        ax.set_xlabel("t")
        ax.set_title("Coupled-pair deviation")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_cesaro(path: str, table: CesaroTable) -> None:
    """Time-averaged value per horizon with the ergodic reference line."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    T = np.array([row.horizon for row in table.rows])
    avg = np.array([row.average for row in table.rows])
    gap = np.array([row.gap for row in table.rows])
    ax1.plot(T, avg, marker="o", label="V_T(x)/T")
    ax1.axhline(table.reference, color="k", linestyle="--",
                label="ergodic constant")
    ax1.set_xlabel("T")
    ax1.legend(fontsize=8)
    ax1.set_title("Time-averaged value")
    positive = gap > 0
    if positive.any():
        ax2.loglog(T[positive], gap[positive], marker="o")
    ax2.set_xlabel("T")
    ax2.set_title("|V_T(x)/T - constant|")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_simulation(path: str, ens: TrajectoryEnsemble,
                      running_mean: np.ndarray | None = None,
                      max_shown: int = 40) -> None:
    """A path subsample with the mean, plus the running-cost average."""
    two = running_mean is not None
    fig, axes = plt.subplots(1, 2 if two else 1, figsize=(10 if two else 6, 4),
                             squeeze=False)
    ax = axes[0, 0]
    shown = min(ens.paths, max_shown)
    for p in range(shown):
        ax.plot(ens.grid, ens.states[p, :, 0], alpha=0.25, linewidth=0.6)
    ax.plot(ens.grid, ens.mean[:, 0], color="k", linewidth=1.8, label="mean")
    ax.set_xlabel("t")
    ax.set_title(f"First state component ({shown} of {ens.paths} paths)")
    ax.legend(fontsize=8)
    if two:
        ax = axes[0, 1]
        ax.plot(ens.grid, running_mean)
        ax.set_xlabel("t")
        ax.set_title("Sample-mean running cost")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


__all__ = [
    "render_cesaro",
    "render_finite_solution",
    "render_simulation",
    "render_turnpike",
]
