"""Simulation traces, run summaries and their on-disk formats."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class DivergenceError(RuntimeError):
    """A simulation produced non-finite values; ``trace`` holds the rows up to the failure."""

    def __init__(self, message: str, step: int, trace: "SimTrace | None" = None):
        super().__init__(f"{message} (step {step})" if step >= 0 else message)
        self.message = message
        self.step = step
        self.trace = trace


@dataclass
class SimTrace:
    """Per-step record, row k describing time kT after the step-k transmission.

    ``h`` is (n+1, N).  ``states`` is (n+1, N, r).  ``qarg`` holds the per-agent
    quantizer argument (its infinity norm over components for ZIZO) of the transmission
    attempted at k, NaN at k = 0 where nothing is sent.  ``delta`` and ``mu`` are the
    consensus and quantization errors in the transmitted variable, (n+1, N) for ZIH and
    (n+1, N, r) for ZIZO.
    """

    t: np.ndarray
    success: np.ndarray
    beta: np.ndarray
    h: np.ndarray
    states: np.ndarray
    delta: np.ndarray
    mu: np.ndarray
    qarg: np.ndarray
    saturated: np.ndarray
    symbols: np.ndarray
    extras: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @property
    def n_agents(self) -> int:
        return self.h.shape[1]

    def delta_norm(self) -> np.ndarray:
        return np.linalg.norm(self.delta.reshape(len(self.t), -1), axis=1)

    def mu_norm(self) -> np.ndarray:
        return np.linalg.norm(self.mu.reshape(len(self.t), -1), axis=1)

    def qarg_max(self) -> np.ndarray:
        out = np.full(len(self.t), np.nan)
        has = ~np.all(np.isnan(self.qarg), axis=1)
        out[has] = np.nanmax(np.abs(self.qarg[has]), axis=1)
        return out

    def state_spread(self) -> np.ndarray:
        """max over agent pairs of the infinity-norm state difference, per step."""
        return np.max(self.states.max(axis=1) - self.states.min(axis=1), axis=1)

    def output_spread(self) -> np.ndarray:
        y = self.states[:, :, 0]
        return y.max(axis=1) - y.min(axis=1)

    def truncated(self, upto: int) -> "SimTrace":
        cut = {
            name: getattr(self, name)[: upto + 1]
            for name in ("t", "success", "beta", "h", "states", "delta", "mu", "qarg", "saturated", "symbols")
        }
        return SimTrace(**cut, extras={k: v[: upto + 1] for k, v in self.extras.items()}, meta=dict(self.meta))


def consensus_step(spread: np.ndarray, tol: float = 1e-3, hold: int = 20) -> int | None:
    """First k from which ``spread`` stays below ``tol`` for ``hold`` consecutive steps."""
    below = spread < tol
    run = 0
    for k, b in enumerate(below):
        run = run + 1 if b else 0
        if run >= hold:
            return k - hold + 1
    return None


@dataclass
class RunSummary:
    protocol: str
    n_steps: int
    final_delta_norm: float
    final_spread: float
    consensus_step: int | None
    predicted_value: list[float] | None
    realized_value: list[float]
    max_qarg: float
    saturated_count: int
    bits_per_step: int
    dos_active_fraction: float
    within_theorem: bool | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if isinstance(val, float):
                val = f"{val:.10g}"
            elif isinstance(val, list):
                val = ", ".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in val)
            elif val is None:
                val = "none"
            elif isinstance(val, bool):
                val = str(val).lower()
            lines.append(f"{key}: {val}")
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trace_columns(trace: SimTrace) -> list[tuple[str, np.ndarray]]:
    n = trace.n_agents
    cols: list[tuple[str, np.ndarray]] = [
        ("k", np.arange(len(trace.t))),
        ("t", trace.t),
        ("success", trace.success),
        ("beta", trace.beta),
    ]
    cols += [(f"h_{i + 1}", trace.h[:, i]) for i in range(n)]
    cols += [
        ("delta_norm", trace.delta_norm()),
        ("mu_norm", trace.mu_norm()),
        ("qarg_max", trace.qarg_max()),
        ("saturated", trace.saturated),
    ]
    cols += [(f"qarg_{i + 1}", trace.qarg[:, i]) for i in range(n)]
    r = trace.states.shape[2]
    cols += [(f"x_{i + 1}_{j + 1}", trace.states[:, i, j]) for i in range(n) for j in range(r)]
    for name, arr in trace.extras.items():
        arr = np.asarray(arr)
        if arr.ndim == 1:
            cols.append((name, arr))
        else:
            cols += [(f"{name}_{i + 1}", arr[:, i]) for i in range(arr.shape[1])]
    return cols


def write_trace_csv(trace: SimTrace, path: Path | str) -> None:
    cols = trace_columns(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name for name, _ in cols])
        for k in range(len(trace.t)):
            w.writerow([_fmt(arr[k]) for _, arr in cols])


def read_trace_csv(path: Path | str) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float) if body else np.zeros((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}


def write_summary(summary: RunSummary, out_dir: Path | str, stem: str = "summary") -> None:
    out_dir = Path(out_dir)
    (out_dir / f"{stem}.txt").write_text(summary.to_text())
    (out_dir / f"{stem}.json").write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
