import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qconsensus.dos import (
    DoSError,
    DoSInfeasibleError,
    DoSModelParams,
    DoSSchedule,
    check_duration,
    check_frequency,
    generate_duty_cycle,
    generate_random,
    longest_run,
    max_consecutive_losses_bound,
    normalize,
    sample_outcomes,
)


def pulses(times, horizon):
    return DoSSchedule.from_pairs([(t, 0.0) for t in times], horizon)


def test_frequency_examples():
    assert check_frequency(DoSSchedule.empty(10), DoSModelParams(eta=0, tau_D=1))
    assert check_frequency(pulses([1.0], 5), DoSModelParams(eta=1, tau_D=10))
    assert not check_frequency(pulses([1.0, 1.1, 1.2], 5), DoSModelParams(eta=0, tau_D=1))


def test_duration_examples():
    assert check_duration(DoSSchedule.empty(10), DoSModelParams(kappa=0, T_dur=2))
    assert not check_duration(DoSSchedule.from_pairs([(0, 2)], 2), DoSModelParams(kappa=0.5, T_dur=2))
    assert check_duration(DoSSchedule.from_pairs([(0, 1)], 4), DoSModelParams(kappa=1, T_dur=2))


def test_loss_bound_examples():
    assert max_consecutive_losses_bound(DoSModelParams(eta=1, tau_D=1, kappa=0.5, T_dur=2), 0.1) == 15
    assert max_consecutive_losses_bound(DoSModelParams(eta=0, tau_D=3, kappa=0, T_dur=5), 0.1) == 0
    assert max_consecutive_losses_bound(DoSModelParams.no_attack(), 0.1) == 0


def test_loss_bound_infeasible():
    with pytest.raises(DoSInfeasibleError, match="DoS can be always active"):
        max_consecutive_losses_bound(DoSModelParams(eta=1, tau_D=0.2, kappa=0.1, T_dur=2), 0.1)


def test_model_params_validation():
    with pytest.raises(DoSError):
        DoSModelParams(T_dur=1.0)
    with pytest.raises(DoSError):
        DoSModelParams(tau_D=0.0)
    with pytest.raises(DoSError):
        DoSModelParams(eta=-1)


def test_normalize_merges_and_keeps_open_end_pulse():
    assert normalize([(3, 4), (0, 1), (0.5, 2), (2, 2.5)]) == ((0, 2.5), (3, 4))
    assert normalize([(1, 1), (0, 2)]) == ((0, 2),)
    # [0, 2) does not contain t = 2, so the pulse there survives
    assert normalize([(0, 2), (2, 2)]) == ((0, 2), (2, 2))
    assert normalize([(1, 1), (1, 1)]) == ((1, 1),)


def test_schedule_rejects_bad_pairs():
    with pytest.raises(DoSError):
        DoSSchedule.from_pairs([(-1, 1)], 10)
    with pytest.raises(DoSError):
        DoSSchedule.from_pairs([(9, 2)], 10)


def test_sampling_examples():
    assert list(sample_outcomes(DoSSchedule.empty(1), 0.05, 5).v_sequence) == [0, 1, 2, 3, 4]
    flags = sample_outcomes(DoSSchedule.from_pairs([(0.04, 0.08)], 1), 0.05, 4).success_flags
    assert list(flags) == [True, False, False, True]
    # a pulse written with rounding error at kT still hits
    flags = sample_outcomes(pulses([0.1 + 0.2], 1), 0.1, 5).success_flags
    assert list(flags) == [True, True, True, False, True]


def test_sampling_requires_initial_success():
    with pytest.raises(DoSError):
        sample_outcomes(DoSSchedule.from_pairs([(0, 0.5)], 2), 1.0, 2, require_initial_success=True)


def test_random_generation_without_budget_is_empty():
    assert generate_random(DoSModelParams(eta=0, tau_D=2, kappa=0, T_dur=3), 100, seed=4).intervals == ()


def test_random_generation_is_deterministic():
    p = DoSModelParams(eta=2, tau_D=3, kappa=0.5, T_dur=3)
    assert generate_random(p, 200, seed=9) == generate_random(p, 200, seed=9)
    assert generate_random(p, 200, seed=9) != generate_random(p, 200, seed=10)


def test_random_generation_rejects_infeasible():
    with pytest.raises(DoSInfeasibleError):
        generate_random(DoSModelParams(eta=1, tau_D=0.1, kappa=1, T_dur=1.5), 10, seed=0, delta=0.1)


def random_model(rng):
    T_dur = float(rng.uniform(1.2, 10))
    delta = float(rng.choice([0.05, 0.1, 0.5]))
    # keep 1/T_dur + delta/tau_D < 1
    tau_D = delta / (1 - 1 / T_dur) * float(rng.uniform(1.1, 20))
    return DoSModelParams(eta=float(rng.uniform(0, 3)), tau_D=tau_D, kappa=float(rng.uniform(0, 2)), T_dur=T_dur), delta


def test_generated_schedules_respect_loss_bound():
    rng = np.random.default_rng(2024)
    for i in range(500):
        p, delta = random_model(rng)
        horizon = 200 * delta
        s = generate_random(p, horizon, seed=i, delta=delta)
        assert check_frequency(s, p) and check_duration(s, p)
        flags = sample_outcomes(s, delta, int(horizon / delta)).success_flags
        assert longest_run(~flags) <= max_consecutive_losses_bound(p, delta)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    extra=st.lists(st.tuples(st.floats(0, 9), st.floats(0, 1)), max_size=5),
)
def test_union_never_restores_a_transmission(seed, extra):
    p = DoSModelParams(eta=2, tau_D=1.5, kappa=0.4, T_dur=3)
    s = generate_random(p, 10.0, seed=seed)
    added = DoSSchedule.from_pairs(extra, 10.0)
    before = sample_outcomes(s, 0.1, 100).success_flags
    after = sample_outcomes(s.union(added), 0.1, 100).success_flags
    assert not np.any(after & ~before)


def test_duty_cycle_zero_is_empty():
    s = generate_duty_cycle(0.0, 5, 100, 0.05, seed=1)
    assert s.intervals == ()


@pytest.mark.parametrize("pct, cap, n, T", [(0.9, 180, 2001, 0.05), (0.95, 38, 3001, 1.0), (0.5, 3, 400, 0.1)])
def test_duty_cycle_fraction_and_runs(pct, cap, n, T):
    for seed in range(5):
        out = sample_outcomes(generate_duty_cycle(pct, cap, n, T, seed), T, n, require_initial_success=True)
        assert abs(out.active_fraction - pct) <= 0.02
        assert out.longest_failure_run() <= cap
    a = generate_duty_cycle(pct, cap, n, T, 3)
    assert a == generate_duty_cycle(pct, cap, n, T, 3)


def test_duty_cycle_incompatible_request():
    with pytest.raises(DoSError):
        generate_duty_cycle(0.95, 2, 100, 1.0, seed=0)
    with pytest.raises(DoSError):
        generate_duty_cycle(1.0, 2, 100, 1.0, seed=0)


def test_contains_half_open():
    s = DoSSchedule.from_pairs([(1, 1), (5, 0)], 10)
    assert s.contains(1.0) and s.contains(1.5) and not s.contains(2.0)
    assert s.contains(5.0) and not s.contains(5.001)
    assert math.isclose(s.measure(), 1.0)
