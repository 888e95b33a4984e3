"""Run a parsed scenario end to end and write its artifacts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from qconsensus.config import ConfigError, ScenarioConfig
from qconsensus.dos import (
    DoSError,
    DoSModelParams,
    DoSSchedule,
    TransmissionOutcome,
    check_duration,
    check_frequency,
    generate_duty_cycle,
    generate_random,
    max_consecutive_losses_bound,
    sample_outcomes,
)
from qconsensus.linear import HTransform, LinearPlant, predict_consensus_value, run_linear
from qconsensus.nonlinear import duffing5, run_nonlinear
from qconsensus.params import ValidationReport, initial_h_bound, validate
from qconsensus.quantizer import QuantizerSpec
from qconsensus.trace import DivergenceError, RunSummary, SimTrace, consensus_step, write_summary, write_trace_csv


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace: SimTrace
    summary: RunSummary
    report: ValidationReport
    schedule: DoSSchedule
    outcome: TransmissionOutcome
    out_dir: Path | None = None


def seeds(seed: int) -> tuple[int, int]:
    """Independent child seeds for the DoS generator and the initial conditions."""
    dos_ss, ic_ss = np.random.SeedSequence(seed).spawn(2)
    return int(dos_ss.generate_state(1)[0]), int(ic_ss.generate_state(1)[0])


def build_schedule(cfg: ScenarioConfig) -> DoSSchedule:
    d, T, n = cfg.dos, cfg.params.T, cfg.n_steps
    horizon = (n + 1) * T
    dos_seed, _ = seeds(cfg.seed)
    try:
        if d.mode == "none":
            return DoSSchedule.empty(horizon)
        if d.mode == "scripted":
            return DoSSchedule.from_pairs(d.intervals, horizon)
        if d.mode == "random":
            p = DoSModelParams(eta=d.eta, tau_D=d.tau_D, kappa=d.kappa, T_dur=d.T_dur)
            return generate_random(p, horizon, dos_seed, delta=T)
        return generate_duty_cycle(d.percent_active, d.max_consecutive, n + 1, T, dos_seed)
    except DoSError as exc:
        raise ConfigError("dos", str(exc)) from None


def transmission_outcome(cfg: ScenarioConfig, schedule: DoSSchedule) -> TransmissionOutcome:
    try:
        return sample_outcomes(schedule, cfg.params.T, cfg.n_steps + 1, require_initial_success=True)
    except DoSError as exc:
        raise ConfigError("dos", str(exc)) from None


def initial_conditions(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray | None]:
    if cfg.is_linear:
        return np.array(cfg.initial_states, dtype=float), None
    if cfg.rho0 is not None:
        return np.array(cfg.rho0), np.array(cfg.z0)
    _, ic_seed = seeds(cfg.seed)
    rng = np.random.default_rng(ic_seed)
    lo, hi = cfg.initial_range
    N = cfg.graph.n_agents
    return rng.uniform(lo, hi, size=(N, 3)), rng.uniform(lo, hi, size=(N, 1))


def effective_params(cfg: ScenarioConfig, x0: np.ndarray):
    """Fill in C_h from the initial conditions when the scenario does not fix it."""
    p = cfg.params
    if p.C_h is None and p.variant != "zizo_baseline":
        h0 = x0[:, : len(p.k_gains)] @ np.asarray(p.k_gains) + x0[:, len(p.k_gains)]
        p = replace(p, C_h=initial_h_bound(h0))
    return p


def bits_per_step(cfg: ScenarioConfig) -> int:
    bits = QuantizerSpec(cfg.params.K).bits_per_symbol
    r = len(cfg.last_row) if cfg.protocol == "zizo" else 1
    return 2 * len(cfg.graph.edges) * bits * r


def summarize(cfg: ScenarioConfig, trace: SimTrace, report: ValidationReport, outcome: TransmissionOutcome) -> RunSummary:
    spread = trace.state_spread() if cfg.is_linear else trace.output_spread()
    final = trace.states[-1]
    predicted = None
    if cfg.is_linear and cfg.protocol == "zih":
        predicted = [float(v) for v in predict_consensus_value(HTransform(cfg.params.k_gains), cfg.initial_states)]
    sat = int(trace.saturated.sum())
    qmax = trace.qarg_max()
    notes = []
    if sat:
        notes.append(f"quantizer saturated on {sat} steps")
    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        notes.append("outside the guaranteed parameter region: " + ", ".join(failed))
    return RunSummary(
        protocol=cfg.protocol,
        n_steps=trace.n_steps,
        final_delta_norm=float(trace.delta_norm()[-1]),
        final_spread=float(spread[-1]),
        consensus_step=consensus_step(spread, cfg.consensus_tol),
        predicted_value=predicted,
        realized_value=[float(v) for v in (final.mean(axis=0) if cfg.is_linear else final[:, 0].mean(keepdims=True))],
        max_qarg=float(np.nanmax(qmax)) if np.any(~np.isnan(qmax)) else 0.0,
        saturated_count=sat,
        bits_per_step=bits_per_step(cfg),
        dos_active_fraction=outcome.active_fraction,
        within_theorem=report.passed,
        notes=notes,
    )


def simulate(cfg: ScenarioConfig) -> ScenarioResult:
    """Run without touching the disk.  Raises DivergenceError with the partial trace attached."""
    schedule = build_schedule(cfg)
    outcome = transmission_outcome(cfg, schedule)
    x0, z0 = initial_conditions(cfg)
    params = effective_params(cfg, x0)
    report = validate(params, cfg.graph)
    flags = outcome.success_flags
    if cfg.is_linear:
        plant = LinearPlant.from_last_row(cfg.last_row)
        trace = run_linear(plant, cfg.graph, params, x0, flags, cfg.n_steps, cfg.protocol, cfg.beta_floor)
    else:
        model = duffing5(cfg.graph.n_agents)
        trace = run_nonlinear(
            model, cfg.graph, params, x0, z0, cfg.eso_l, cfg.eso_M, flags, cfg.n_steps, cfg.substeps
        )
    trace.meta.update(name=cfg.name, seed=cfg.seed)
    summary = summarize(cfg, trace, report, outcome)
    return ScenarioResult(cfg, trace, summary, report, schedule, outcome)


def write_schedule_csv(schedule: DoSSchedule, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end"])
        for a, b in schedule.intervals:
            w.writerow([repr(float(a)), repr(float(b))])


def output_dir(cfg: ScenarioConfig, override: str | Path | None = None) -> Path:
    d = Path(override) if override is not None else Path(cfg.output_dir or Path("runs") / cfg.name)
    d.mkdir(parents=True, exist_ok=True)
    return d


def run_scenario(cfg: ScenarioConfig, out: str | Path | None = None, plot: bool = False) -> ScenarioResult:
    """Simulate and write trace.csv, summary.{txt,json}, params.txt, dos.csv (and plot.svg).

    On divergence the partial trace is still written before the error propagates.
    """
    d = output_dir(cfg, out)
    schedule = build_schedule(cfg)
    write_schedule_csv(schedule, d / "dos.csv")
    try:
        res = simulate(cfg)
    except DivergenceError as exc:
        if exc.trace is not None:
            write_trace_csv(exc.trace, d / "trace.csv")
        (d / "summary.txt").write_text(f"diverged: {exc}\n")
        raise
    res.out_dir = d
    write_trace_csv(res.trace, d / "trace.csv")
    write_summary(res.summary, d)
    (d / "params.txt").write_text(res.report.to_text())
    if plot:
        from qconsensus.plotting import plot_trace

        plot_trace(res.trace, res.schedule, d / "plot.svg", title=cfg.name, outputs_only=not cfg.is_linear)
    return res


def run_params(cfg: ScenarioConfig, out: str | Path | None = None) -> ValidationReport:
    x0, _ = initial_conditions(cfg)
    report = validate(effective_params(cfg, x0), cfg.graph)
    if out is not None or cfg.output_dir:
        d = output_dir(cfg, out)
        (d / "params.txt").write_text(report.to_text())
        (d / "params.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def run_dos_gen(cfg: ScenarioConfig, out: str | Path | None = None) -> dict:
    schedule = build_schedule(cfg)
    outcome = transmission_outcome(cfg, schedule)
    info = {
        "mode": cfg.dos.mode,
        "horizon": schedule.horizon,
        "intervals": len(schedule.intervals),
        "measure": schedule.measure(),
        "active_fraction": outcome.active_fraction,
        "longest_failure_run": outcome.longest_failure_run(),
    }
    if cfg.dos.mode == "random":
        p = DoSModelParams(eta=cfg.dos.eta, tau_D=cfg.dos.tau_D, kappa=cfg.dos.kappa, T_dur=cfg.dos.T_dur)
        info["frequency_ok"] = check_frequency(schedule, p)
        info["duration_ok"] = check_duration(schedule, p)
        info["max_consecutive_losses_bound"] = max_consecutive_losses_bound(p, cfg.params.T)
    d = output_dir(cfg, out)
    write_schedule_csv(schedule, d / "dos.csv")
    (d / "dos_summary.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return info


# ---------------------------------------------------------------- comparison


def check_comparable(a: ScenarioConfig, b: ScenarioConfig) -> None:
    if not (a.is_linear and b.is_linear):
        raise ConfigError("", "compare needs two linear scenarios")
    mismatches = []
    if a.last_row != b.last_row or not np.array_equal(a.initial_states, b.initial_states):
        mismatches.append("plant")
    if a.graph.n_agents != b.graph.n_agents or a.graph.edges != b.graph.edges:
        mismatches.append("graph")
    if a.n_steps != b.n_steps or a.params.T != b.params.T:
        mismatches.append("horizon")
    if mismatches:
        raise ConfigError("", f"scenarios differ in {', '.join(mismatches)}")
    sa, sb = build_schedule(a), build_schedule(b)
    if sa.intervals != sb.intervals:
        raise ConfigError("dos", "scenarios use different DoS schedules")


@dataclass
class CompareRun:
    name: str
    protocol: str
    delta_norm: np.ndarray
    max_qarg: float
    diverged_at: int | None
    converged: bool
    min_K: int | None = None


def _attempt(cfg: ScenarioConfig) -> tuple[SimTrace, int | None]:
    try:
        return simulate(cfg).trace, None
    except DivergenceError as exc:
        return exc.trace, exc.step


def unsaturated(cfg: ScenarioConfig, K: int) -> bool:
    c = replace(cfg, params=replace(cfg.params, K=K))
    tr, div = _attempt(c)
    return div is None and not tr.saturated.any()


def minimal_levels(cfg: ScenarioConfig, k_max: int = 1 << 20) -> int | None:
    """Smallest K for which the run stays unsaturated, by doubling then bisection.

    Assumes saturation is monotone in K, which holds for the scaled quantizer argument
    as long as the run does not diverge.
    """
    hi = 1
    while not unsaturated(cfg, hi):
        hi *= 2
        if hi > k_max:
            return None
    lo = hi // 2  # saturated (or 0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if unsaturated(cfg, mid):
            hi = mid
        else:
            lo = mid
    return hi


def compare(a: ScenarioConfig, b: ScenarioConfig, min_k: bool = False) -> list[CompareRun]:
    check_comparable(a, b)
    runs = []
    for cfg in (a, b):
        tr, div = _attempt(cfg)
        spread = tr.state_spread()
        dn = tr.delta_norm()
        ok = div is None and np.all(np.isfinite(spread)) and consensus_step(spread, cfg.consensus_tol) is not None
        qmax = tr.qarg_max()
        run = CompareRun(
            name=cfg.name,
            protocol=cfg.protocol,
            delta_norm=dn,
            max_qarg=float(np.nanmax(qmax)) if np.any(np.isfinite(qmax)) else float("nan"),
            diverged_at=div,
            converged=bool(ok),
        )
        if min_k:
            run.min_K = minimal_levels(cfg)
        runs.append(run)
    return runs


def comparison_text(runs: list[CompareRun], checkpoints: int = 10) -> str:
    lines = []
    for r in runs:
        final = r.delta_norm[-1] if len(r.delta_norm) else float("nan")
        line = (
            f"{r.name} [{r.protocol}]: final_delta_norm={final:.6g} max_qarg={r.max_qarg:.6g} "
            f"converged={str(r.converged).lower()} diverged_at={r.diverged_at if r.diverged_at is not None else 'none'}"
        )
        if r.min_K is not None:
            line += f" min_K={r.min_K}"
        lines.append(line)
    n = max(len(r.delta_norm) for r in runs)
    ks = sorted({int(round(k)) for k in np.linspace(0, n - 1, checkpoints + 1)})
    lines.append("k " + " ".join(f"{r.name}" for r in runs))
    for k in ks:
        vals = [f"{r.delta_norm[k]:.6g}" if k < len(r.delta_norm) else "nan" for r in runs]
        lines.append(f"{k} " + " ".join(vals))
    return "\n".join(lines) + "\n"


def write_comparison(runs: list[CompareRun], d: Path) -> None:
    d.mkdir(parents=True, exist_ok=True)
    n = max(len(r.delta_norm) for r in runs)
    with open(d / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"delta_norm_{r.name}" for r in runs])
        for k in range(n):
            w.writerow([k] + [repr(float(r.delta_norm[k])) if k < len(r.delta_norm) else "nan" for r in runs])
    (d / "compare.txt").write_text(comparison_text(runs))
