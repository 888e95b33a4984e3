"""Denial-of-Service schedules: frequency/duration admissibility, generators and sampling.

A schedule is a union of half-open intervals [start, end) on the time axis.  A zero-length
interval is a single pulse at ``start``.  DoS is network-wide, so sampling a schedule at
the instants kT yields one shared success flag per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CHECK_TOL = 1e-12
GENERATION_BUDGET = 10_000


class DoSError(ValueError):
    pass


class DoSInfeasibleError(DoSError):
    pass


def _ratio(x: float, denom: float) -> float:
    return 0.0 if math.isinf(denom) else x / denom


@dataclass(frozen=True)
class DoSModelParams:
    eta: float = 0.0
    tau_D: float = math.inf
    kappa: float = 0.0
    T_dur: float = math.inf

    def __post_init__(self):
        if self.eta < 0 or self.kappa < 0:
            raise DoSError("eta and kappa must be non-negative")
        if not self.tau_D > 0:
            raise DoSError("tau_D must be positive")
        if not self.T_dur > 1:
            raise DoSError("T_dur must exceed 1")

    @classmethod
    def no_attack(cls) -> "DoSModelParams":
        return cls()

    def feasible(self, delta: float) -> bool:
        return 1.0 / self.T_dur + _ratio(delta, self.tau_D) < 1.0


@dataclass(frozen=True)
class DoSSchedule:
    intervals: tuple[tuple[float, float], ...]  # (start, end), normalized
    horizon: float

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]], horizon: float) -> "DoSSchedule":
        """Build from (start_s, duration_s) pairs."""
        raw = []
        for p in pairs:
            start, dur = float(p[0]), float(p[1])
            if start < 0 or dur < 0:
                raise DoSError(f"DoS interval ({start}, {dur}) has a negative start or duration")
            if start + dur > horizon:
                raise DoSError(f"DoS interval ({start}, {dur}) extends past the horizon {horizon}")
            raw.append((start, start + dur))
        return cls(normalize(raw), float(horizon))

    @classmethod
    def empty(cls, horizon: float) -> "DoSSchedule":
        return cls((), float(horizon))

    def pairs(self) -> list[tuple[float, float]]:
        return [(a, b - a) for a, b in self.intervals]

    @property
    def starts(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals], dtype=float)

    @property
    def ends(self) -> np.ndarray:
        return np.array([b for _, b in self.intervals], dtype=float)

    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def union(self, other: "DoSSchedule") -> "DoSSchedule":
        return DoSSchedule(normalize(self.intervals + other.intervals), max(self.horizon, other.horizon))

    def contains(self, t: float, tol: float = 0.0) -> bool:
        for a, b in self.intervals:
            if a == b:
                if abs(t - a) <= tol:
                    return True
            elif a - tol <= t < b - tol:
                return True
        return False


def normalize(intervals: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    """Sort, merge overlapping or abutting intervals, and absorb pulses that lie inside one.

    A pulse sitting exactly at the open end of an interval is kept separately since the
    half-open representation cannot absorb it.
    """
    items = sorted((float(a), float(b)) for a, b in intervals)
    out: list[list[float]] = []
    for a, b in items:
        if out:
            pa, pb = out[-1]
            if pa == pb == a == b:
                continue
            if a < pb or (a == pb and b > a and pb > pa):
                out[-1][1] = max(pb, b)
                continue
            if pa == pb and a == pa and b > a:
                # earlier pulse at the start of this interval
                out[-1][1] = b
                continue
        out.append([a, b])
    return tuple((a, b) for a, b in out)


def check_frequency(s: DoSSchedule, p: DoSModelParams) -> bool:
    """Every window [h_i, h_j] between off/on transitions holds j-i+1 <= eta + (h_j-h_i)/tau_D."""
    h = s.starts
    n = len(h)
    for m in range(1, n + 1):
        span = h[m - 1 :] - h[: n - m + 1]
        if m > p.eta + _ratio(float(span.min()), p.tau_D) + CHECK_TOL:
            return False
    return True


def check_duration(s: DoSSchedule, p: DoSModelParams) -> bool:
    """Every window from an interval start to a later interval end holds |Xi| <= kappa + len/T_dur."""
    a, b = s.starts, s.ends
    n = len(a)
    cum = np.concatenate([[0.0], np.cumsum(b - a)])
    for m in range(1, n + 1):
        measure = cum[m:] - cum[: n - m + 1]
        window = b[m - 1 :] - a[: n - m + 1]
        slack = p.kappa + window / p.T_dur - measure
        if slack.min() < -CHECK_TOL:
            return False
    return True


def _last_window_ok(starts: np.ndarray, ends: np.ndarray, p: DoSModelParams) -> bool:
    """Both checks restricted to windows that end at the last interval."""
    n = len(starts)
    counts = n - np.arange(n)
    if np.any(counts > p.eta + np.array([_ratio(x, p.tau_D) for x in starts[-1] - starts]) + CHECK_TOL):
        return False
    lengths = ends - starts
    measure = np.cumsum(lengths[::-1])[::-1]
    window = ends[-1] - starts
    return bool(np.all(measure <= p.kappa + window / p.T_dur + CHECK_TOL))


def max_consecutive_losses_bound(p: DoSModelParams, delta: float) -> int:
    """Worst-case number of consecutive lost transmissions at sampling interval ``delta``."""
    if delta <= 0:
        raise DoSError("sampling interval must be positive")
    if not p.feasible(delta):
        raise DoSInfeasibleError("DoS can be always active")
    value = (p.kappa + p.eta * delta) / (1.0 - 1.0 / p.T_dur - _ratio(delta, p.tau_D)) / delta
    # guard against e.g. 14.999999999999998 for an exact 15
    return int(math.floor(value + 1e-9))


def generate_random(
    p: DoSModelParams,
    horizon: float,
    seed: int,
    delta: float | None = None,
    budget: int = GENERATION_BUDGET,
) -> DoSSchedule:
    """Random admissible schedule built by proposing intervals left to right.

    Gaps are exponential with mean tau_D (or horizon/10 for an unbounded dwell time) and
    durations uniform up to kappa plus the duty-cycle allowance of the gap.  A proposal
    that violates either check is halved up to four times (down to a pulse), then dropped.
    """
    if delta is not None and not p.feasible(delta):
        raise DoSInfeasibleError("DoS can be always active")
    rng = np.random.default_rng(seed)
    mean_gap = horizon / 10.0 if math.isinf(p.tau_D) else p.tau_D
    starts: list[float] = []
    ends: list[float] = []
    t = 0.0
    attempts = 0
    while True:
        gap = float(rng.exponential(mean_gap))
        t = t + max(gap, 1e-9)
        if t >= horizon:
            break
        attempts += 1
        if attempts > budget:
            raise DoSError(f"DoS generation budget of {budget} proposals exhausted")
        dur = float(rng.uniform(0.0, p.kappa + gap / p.T_dur))
        dur = min(dur, horizon - t)
        for shrink in range(6):
            cand_s = np.array(starts + [t])
            cand_e = np.array(ends + [t + dur])
            if _last_window_ok(cand_s, cand_e, p):
                starts.append(t)
                ends.append(t + dur)
                t = t + dur
                break
            dur = 0.0 if shrink >= 4 else dur / 2.0
    sched = DoSSchedule(normalize(zip(starts, ends)), float(horizon))
    if not (check_frequency(sched, p) and check_duration(sched, p)):
        raise DoSError("internal error: generated schedule failed re-validation")
    return sched


def generate_duty_cycle(
    percent_active: float,
    max_consecutive: int,
    n_steps: int,
    T: float,
    seed: int,
) -> DoSSchedule:
    """Schedule whose samples k = 0..n_steps-1 fail on round(percent_active*n_steps) steps.

    Failures come in runs of at most ``max_consecutive`` steps separated by at least one
    success; k = 0 always succeeds.  Each failure run [a, b] becomes the interval
    [(a - 1/2)T, (b + 1/2)T).
    """
    if not 0.0 <= percent_active < 1.0:
        raise DoSError("percent_active must lie in [0, 1)")
    if max_consecutive < 1:
        raise DoSError("max_consecutive must be at least 1")
    if n_steps < 1 or T <= 0:
        raise DoSError("n_steps and T must be positive")
    rng = np.random.default_rng(seed)
    n_fail = int(round(percent_active * n_steps))
    horizon = n_steps * T
    if n_fail == 0:
        return DoSSchedule.empty(horizon)
    n_succ = n_steps - n_fail
    min_runs = -(-n_fail // max_consecutive)
    max_runs = min(n_succ, n_fail)
    if min_runs > max_runs:
        raise DoSError(
            f"cannot place {n_fail} failures in runs of at most {max_consecutive} "
            f"among {n_steps} steps with k=0 successful"
        )
    typical_run = (max_consecutive + 1) / 2.0
    runs = int(np.clip(round(n_fail / typical_run), min_runs, max_runs))

    fail_runs = _capped_composition(n_fail, runs, max_consecutive, rng)
    # success runs: one before each failure run (>= 1 each) plus an optional tail (>= 0)
    extra = rng.multinomial(n_succ - runs, np.full(runs + 1, 1.0 / (runs + 1)))
    succ_runs = extra + np.concatenate([np.ones(runs, dtype=int), [0]])

    intervals = []
    k = 0
    for q in range(runs):
        k += int(succ_runs[q])
        a, b = k, k + int(fail_runs[q]) - 1
        intervals.append(((a - 0.5) * T, (b + 0.5) * T))
        k = b + 1
    return DoSSchedule(normalize(intervals), horizon)


def _capped_composition(total: int, parts: int, cap: int, rng: np.random.Generator) -> np.ndarray:
    sizes = 1 + rng.multinomial(total - parts, np.full(parts, 1.0 / parts))
    over = np.maximum(sizes - cap, 0)
    excess = int(over.sum())
    sizes = np.minimum(sizes, cap)
    while excess:
        room = np.flatnonzero(sizes < cap)
        i = rng.choice(room)
        sizes[i] += 1
        excess -= 1
    return sizes


@dataclass(frozen=True)
class TransmissionOutcome:
    success_flags: np.ndarray  # bool, index k

    @property
    def v_sequence(self) -> np.ndarray:
        return np.flatnonzero(self.success_flags)

    @property
    def active_fraction(self) -> float:
        return float(1.0 - self.success_flags.mean()) if len(self.success_flags) else 0.0

    def longest_failure_run(self) -> int:
        return longest_run(~self.success_flags)


def longest_run(mask: np.ndarray) -> int:
    best = cur = 0
    for x in mask:
        cur = cur + 1 if x else 0
        best = max(best, cur)
    return best


def sample_outcomes(
    s: DoSSchedule,
    T: float,
    n_steps: int,
    require_initial_success: bool = False,
) -> TransmissionOutcome:
    """Success flag for k = 0..n_steps-1: kT lies in no DoS interval.

    Membership uses a tolerance of 1e-9*T so that a pulse placed at a rounded kT still hits.
    """
    if T <= 0:
        raise DoSError("T must be positive")
    tol = 1e-9 * T
    flags = np.ones(n_steps, dtype=bool)
    t = np.arange(n_steps) * T
    for a, b in s.intervals:
        if a == b:
            flags &= ~(np.abs(t - a) <= tol)
        else:
            flags &= ~((t >= a - tol) & (t < b - tol))
    if require_initial_success and n_steps and not flags[0]:
        raise DoSError("the transmission at k=0 must succeed")
    return TransmissionOutcome(flags)
