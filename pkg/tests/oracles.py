"""Independent reference computations shared by the linear tests and the acceptance suite."""

import numpy as np

from qconsensus.dos import generate_duty_cycle, sample_outcomes
from qconsensus.graph import random_connected_graph
from qconsensus.linear import HTransform, LinearPlant
from qconsensus.params import initial_h_bound, params_for_levels
from qconsensus.quantizer import quantize_vec


def gains_with_poles(poles) -> tuple[float, ...]:
    """k_1..k_{r-1} whose reduced chain has exactly the given (real) eigenvalues."""
    if len(poles) == 0:
        return ()
    return tuple(float(v) for v in np.poly(poles)[1:][::-1])


def random_linear_case(rng, n_steps, K=None, max_agents=10):
    """Graph, plant, validated parameters, initial states and success flags, all random."""
    n = int(rng.integers(2, max_agents + 1))
    g = random_connected_graph(n, rng)
    r = int(rng.integers(1, 5))
    poles = []
    while len(poles) < r - 1:
        p = float(rng.uniform(-0.9, 0.9))
        if all(abs(p - q) > 0.05 for q in poles):
            poles.append(p)
    k_gains = gains_with_poles(poles)
    plant = LinearPlant.from_last_row(rng.uniform(-1.5, 1.5, r))
    x0 = rng.uniform(-50, 50, (n, r))
    C_h = initial_h_bound(HTransform(k_gains).h_of(x0))
    K = int(rng.choice([1, 4, 16])) if K is None else K
    params = params_for_levels(
        "linear_thm3", K, float(rng.uniform(0.1, 0.9)), g, T=float(rng.choice([0.1, 1.0])),
        C_h=C_h, c_fraction=float(rng.uniform(0.2, 0.95)), k_gains=k_gains,
    )
    pct = float(rng.uniform(0.0, 0.9))
    # a run cap below pct / (1 - pct) cannot fit the requested failures between successes
    cap = max(int(rng.integers(1, 30)), int(np.ceil(pct / (1 - pct))) + 1)
    sched = generate_duty_cycle(pct, cap, n_steps + 1, params.T, int(rng.integers(2**31)))
    flags = sample_outcomes(sched, params.T, n_steps + 1, require_initial_success=True).success_flags
    return g, plant, params, x0, flags


def error_recursion(trace, laplacian, c, T, K):
    """Propagate (delta, mu) from their initial values using only (delta, mu, beta) and Q.

    On a step whose transmission at kT succeeded, the coupling is -L chi = -L (H - mu),
    so delta' = (I - cT L) delta + cT L mu; the encoder then sees e = mu + H' - H and
    leaves mu' = e - beta Q(e / beta) if the transmission at (k+1)T succeeds, mu' = e if not.
    """
    L = np.asarray(laplacian)
    flags, beta = trace.success, trace.beta
    n = trace.n_steps
    delta = np.zeros_like(trace.delta)
    mu = np.zeros_like(trace.mu)
    delta[0], mu[0] = trace.delta[0], trace.mu[0]
    for k in range(n):
        d, m = delta[k], mu[k]
        if flags[k]:
            step = c * T * (L @ (m - d))
            d_next = d + step
        else:
            step = np.zeros_like(d)
            d_next = d.copy()
        e = m + step
        if flags[k + 1]:
            mu[k + 1] = e - beta[k] * quantize_vec(K, e / beta[k])
        else:
            mu[k + 1] = e
        delta[k + 1] = d_next
    return delta, mu
