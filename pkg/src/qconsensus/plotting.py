"""SVG chart of a run: outputs per agent and the consensus-error norm, DoS shaded gray."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from qconsensus.dos import DoSSchedule  # noqa: E402
from qconsensus.trace import SimTrace  # noqa: E402


def _shade(ax, schedule: DoSSchedule, t_end: float) -> None:
    for a, b in schedule.intervals:
        if a >= t_end:
            break
        ax.axvspan(a, min(b, t_end), color="0.85", lw=0, zorder=0)


def plot_trace(trace: SimTrace, schedule: DoSSchedule, path: str | Path, title: str = "", outputs_only=False) -> None:
    """``outputs_only`` plots the first state component only (the output y for nonlinear runs)."""
    plt.rcParams["svg.hashsalt"] = "qconsensus"
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    t = trace.t
    comps = 1 if outputs_only else trace.states.shape[2]
    for i in range(trace.n_agents):
        for j in range(comps):
            label = (f"y_{i + 1}" if outputs_only else f"agent {i + 1}") if j == 0 else None
            ax1.plot(t, trace.states[:, i, j], lw=0.9, color=f"C{i % 10}", label=label)
    ax1.set_ylabel("output" if outputs_only else "state")
    ax1.legend(fontsize="small", ncol=min(trace.n_agents, 5))
    dn = trace.delta_norm()
    # exact zeros (e.g. observers started at rest) would stretch the log axis
    ax2.semilogy(t, np.where(dn > 0, dn, np.nan), color="k", lw=0.9)
    ax2.set_ylabel("||delta||")
    ax2.set_xlabel("t [s]")
    for ax in (ax1, ax2):
        _shade(ax, schedule, t[-1] if len(t) else 0.0)
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
