"""Uncertain strict-feedback agents driven by the ESO-based ZIH protocol.

Each agent is in normal form: rho_j' = rho_{j+1} for j < r, rho_r' = F + u, with an unknown
total disturbance F and stable zero dynamics z.  Plant, zero dynamics and observer are
integrated together with fixed-step RK4 between sampling instants; the coupling term is
held over each interval and the cancellation terms follow the observer continuously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from qconsensus.codec import ScalingState, ZihNetworkCodec
from qconsensus.eso import EsoGains, SaturationBounds, eso_derivative, h_bar, saturate_estimates
from qconsensus.graph import Graph
from qconsensus.params import ProtocolParams
from qconsensus.quantizer import QuantizerInputError, QuantizerSpec
from qconsensus.trace import DivergenceError, SimTrace

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def rk4_interval(f: Callable, t0: float, y0: np.ndarray, T: float, substeps: int) -> np.ndarray:
    """Classic fixed-step RK4 of y' = f(t, y) over [t0, t0 + T]."""
    y = np.array(y0, dtype=float)
    h = T / substeps
    for s in range(substeps):
        t = t0 + s * h
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def default_substeps(T: float, eps: float) -> int:
    return math.ceil(max(20 * T / eps, 50))


@dataclass
class NonlinearAgentModel:
    """Network of N agents in normal form.

    ``total_disturbance(rho, z, t)`` returns F for every agent, shape (N,);
    ``zero_dynamics(rho, z, t)`` returns dz/dt, shape (N, m).  The chain rows
    rho_j' = rho_{j+1} are fixed by construction.
    """

    name: str
    n_agents: int
    r: int
    n_zero: int
    total_disturbance: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    zero_dynamics: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    fast_params: dict = field(default_factory=dict)

    def __post_init__(self):
        # probe: whatever F does, rows 1..r-1 of rho' must copy rho_2..rho_r
        rng = np.random.default_rng(0)
        rho = rng.normal(size=(self.n_agents, self.r))
        z = rng.normal(size=(self.n_agents, self.n_zero))
        d = self.rho_dynamics(rho, z, np.zeros(self.n_agents), 0.3)
        if not np.array_equal(d[:, :-1], rho[:, 1:]):
            raise ValueError(f"model {self.name!r} breaks the integrator-chain structure")

    def rho_dynamics(self, rho: np.ndarray, z: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        d = np.empty_like(rho)
        d[:, :-1] = rho[:, 1:]
        d[:, -1] = self.total_disturbance(rho, z, t) + u
        return d


def duffing5(n_agents: int = 5) -> NonlinearAgentModel:
    """Duffing-type chain with a first-order lag and decaying zero dynamics, agent i = 1..N.

    F_i = rho_3 - p3 (rho_3 - rho_2) - p1 (rho_2 - rho_1) - p2 (rho_2 - rho_1)^3 + z + w_i
    with p1 = -1.1 - 0.2i, p2 = 1 + 0.2i, p3 = 0.4 + 0.1i and w_i = sin(i t) / (2i);
    z' = -((rho_3 - rho_2)^2 + w_i^2) z.
    """
    idx = np.arange(1, n_agents + 1, dtype=float)
    p1 = -1.1 - 0.2 * idx
    p2 = 1.0 + 0.2 * idx
    p3 = 0.4 + 0.1 * idx

    def w(t):
        return np.sin(idx * t) / (2 * idx)

    def total(rho, z, t):
        d21 = rho[:, 1] - rho[:, 0]
        d32 = rho[:, 2] - rho[:, 1]
        return rho[:, 2] - p3 * d32 - p1 * d21 - p2 * d21**3 + z[:, 0] + w(t)

    def zdot(rho, z, t):
        d32 = rho[:, 2] - rho[:, 1]
        return (-(d32**2 + w(t) ** 2) * z[:, 0])[:, None]

    return NonlinearAgentModel("duffing5", n_agents, 3, 1, total, zdot, {"p1": p1, "p2": p2, "p3": p3})


def integrator_chain(n_agents: int, r: int, disturbance: Callable[[float], np.ndarray] | None = None) -> NonlinearAgentModel:
    """rho^(r) = w(t) + u with no zero dynamics; w defaults to zero."""

    def total(rho, z, t):
        return np.zeros(n_agents) if disturbance is None else np.broadcast_to(disturbance(t), (n_agents,)).astype(float)

    def zdot(rho, z, t):
        return np.zeros((n_agents, 0))

    return NonlinearAgentModel(f"chain{r}", n_agents, r, 0, total, zdot)


def control_law(sat_estimates, held_coupling, k_gains: Sequence[float]):
    """u = -sum_l k_l rho_bar_{l+1} - rho_bar_{r+1} + coupling, broadcasting over agents."""
    s = np.asarray(sat_estimates, dtype=float)
    k = np.asarray(k_gains, dtype=float)
    r = len(k) + 1
    return -(s[..., 1:r] @ k) - s[..., r] + held_coupling


@dataclass
class NonlinearState:
    rho: np.ndarray  # (N, r)
    z: np.ndarray  # (N, m)
    rho_hat: np.ndarray  # (N, r+1)
    t: float = 0.0

    def copy(self) -> "NonlinearState":
        return NonlinearState(self.rho.copy(), self.z.copy(), self.rho_hat.copy(), self.t)


def _pack(s: NonlinearState) -> np.ndarray:
    return np.concatenate([s.rho, s.z, s.rho_hat], axis=1)


def _unpack(y: np.ndarray, r: int, m: int, t: float) -> NonlinearState:
    return NonlinearState(y[:, :r].copy(), y[:, r : r + m].copy(), y[:, r + m :].copy(), t)


def closed_loop_rhs(model: NonlinearAgentModel, gains: EsoGains, bounds: SaturationBounds, k_gains, coupling):
    r, m = model.r, model.n_zero

    def f(t, y):
        rho, z, rh = y[:, :r], y[:, r : r + m], y[:, r + m :]
        u = control_law(saturate_estimates(rh, bounds), coupling, k_gains)
        return np.concatenate(
            [model.rho_dynamics(rho, z, u, t), model.zero_dynamics(rho, z, t), eso_derivative(rh, rho[:, 0], u, gains)],
            axis=1,
        )

    return f


if numba is not None:

    @numba.njit(cache=True)
    def _duffing_rhs(y, t, out, coupling, k1, k2, inj, M, p1, p2, p3):
        for i in range(y.shape[0]):
            idx = i + 1.0
            w = math.sin(idx * t) / (2.0 * idx)
            r1, r2, r3, z = y[i, 0], y[i, 1], y[i, 2], y[i, 3]
            sb2 = M[1] * min(1.0, max(-1.0, y[i, 5] / M[1]))
            sb3 = M[2] * min(1.0, max(-1.0, y[i, 6] / M[2]))
            sb4 = M[3] * min(1.0, max(-1.0, y[i, 7] / M[3]))
            u = -k1 * sb2 - k2 * sb3 - sb4 + coupling[i]
            d21 = r2 - r1
            d32 = r3 - r2
            F = r3 - p3[i] * d32 - p1[i] * d21 - p2[i] * d21 * d21 * d21 + z + w
            e = r1 - y[i, 4]
            out[i, 0] = r2
            out[i, 1] = r3
            out[i, 2] = F + u
            out[i, 3] = -(d32 * d32 + w * w) * z
            out[i, 4] = y[i, 5] + inj[0] * e
            out[i, 5] = y[i, 6] + inj[1] * e
            out[i, 6] = y[i, 7] + u + inj[2] * e
            out[i, 7] = inj[3] * e

    @numba.njit(cache=True)
    def _duffing_rk4(y, t0, T, n_sub, coupling, k1, k2, inj, M, p1, p2, p3):
        h = T / n_sub
        a = np.empty_like(y)
        b = np.empty_like(y)
        c = np.empty_like(y)
        d = np.empty_like(y)
        tmp = np.empty_like(y)
        for s in range(n_sub):
            t = t0 + s * h
            _duffing_rhs(y, t, a, coupling, k1, k2, inj, M, p1, p2, p3)
            for i in range(y.shape[0]):
                for j in range(y.shape[1]):
                    tmp[i, j] = y[i, j] + h / 2 * a[i, j]
            _duffing_rhs(tmp, t + h / 2, b, coupling, k1, k2, inj, M, p1, p2, p3)
            for i in range(y.shape[0]):
                for j in range(y.shape[1]):
                    tmp[i, j] = y[i, j] + h / 2 * b[i, j]
            _duffing_rhs(tmp, t + h / 2, c, coupling, k1, k2, inj, M, p1, p2, p3)
            for i in range(y.shape[0]):
                for j in range(y.shape[1]):
                    tmp[i, j] = y[i, j] + h * c[i, j]
            _duffing_rhs(tmp, t + h, d, coupling, k1, k2, inj, M, p1, p2, p3)
            for i in range(y.shape[0]):
                for j in range(y.shape[1]):
                    y[i, j] = y[i, j] + h / 6 * (a[i, j] + 2 * b[i, j] + 2 * c[i, j] + d[i, j])
        return y


def _fast_path_ok(model, gains, k_gains) -> bool:
    return numba is not None and model.name == "duffing5" and len(gains.l_coeffs) == 4 and len(k_gains) == 2


def integrate_interval(
    state: NonlinearState,
    model: NonlinearAgentModel,
    gains: EsoGains,
    bounds: SaturationBounds,
    k_gains: Sequence[float],
    coupling: np.ndarray,
    T: float,
    substeps: int,
    fast: bool = True,
) -> NonlinearState:
    """Advance plant, zero dynamics and observer jointly over one sampling interval."""
    if substeps < math.ceil(20 * T / gains.eps - 1e-9):
        raise ValueError(f"{substeps} substeps is too coarse for eps={gains.eps}; need >= 20 T / eps")
    y = _pack(state)
    coupling = np.asarray(coupling, dtype=float)
    if fast and _fast_path_ok(model, gains, k_gains):
        fp = model.fast_params
        y = _duffing_rk4(
            y, state.t, T, substeps, coupling, float(k_gains[0]), float(k_gains[1]),
            gains.injection, np.asarray(bounds.M_bounds), fp["p1"], fp["p2"], fp["p3"],
        )
    else:
        f = closed_loop_rhs(model, gains, bounds, k_gains, coupling)
        y = rk4_interval(f, state.t, y, T, substeps)
    if not np.all(np.isfinite(y)):
        raise DivergenceError(f"state is no longer finite at t={state.t + T:.6g}", -1)
    return _unpack(y, model.r, model.n_zero, state.t + T)


def transient_time(eps: float) -> float:
    """Surrogate for the observer's peaking transient, 10 eps |ln eps|."""
    return 10 * eps * abs(math.log(eps))


def run_nonlinear(
    model: NonlinearAgentModel,
    g: Graph,
    params: ProtocolParams,
    rho0,
    z0,
    l_coeffs: Sequence[float],
    M_bounds: Sequence[float],
    success_flags: Sequence[bool],
    n_steps: int,
    substeps: int | None = None,
    fast: bool = True,
) -> SimTrace:
    """Simulate ``n_steps`` sampling periods of the ESO-based ZIH protocol.

    Row k of the trace holds the true h (from rho) in ``h``; the transmitted estimate
    h_bar, the observer errors and the outputs go to ``extras``.  ``delta`` and ``mu``
    are taken on h_bar, the variable the codec actually sees.
    """
    if params.eps is None:
        raise ValueError("the observer scale eps is required")
    N, r = model.n_agents, model.r
    if N != g.n_agents:
        raise ValueError(f"model has {N} agents, graph has {g.n_agents}")
    if len(params.k_gains) != r - 1:
        raise ValueError(f"need {r - 1} k_gains for relative degree {r}")
    gains = EsoGains(tuple(l_coeffs), params.eps)
    if gains.r != r:
        raise ValueError(f"{len(l_coeffs)} observer gains given for relative degree {r}")
    bounds = SaturationBounds(tuple(M_bounds))
    if len(bounds.M_bounds) != r + 1:
        raise ValueError(f"need {r + 1} saturation bounds")
    flags = np.asarray(success_flags, dtype=bool)
    if len(flags) < n_steps + 1:
        raise ValueError(f"need {n_steps + 1} success flags, got {len(flags)}")
    if not flags[0]:
        raise ValueError("the transmission at k=0 must succeed")
    substeps = substeps or default_substeps(params.T, params.eps)

    state = NonlinearState(
        np.array(rho0, dtype=float).reshape(N, r),
        np.array(z0, dtype=float).reshape(N, model.n_zero),
        np.zeros((N, r + 1)),
    )
    k_gains = np.asarray(params.k_gains, dtype=float)
    weights = np.concatenate([k_gains, [1.0]])
    spec = QuantizerSpec(params.K)
    scaling = ScalingState(beta=params.beta0, gamma1=params.gamma1, floor=math.sqrt(params.eps))
    codec = ZihNetworkCodec(g.adjacency, scaling, spec)

    n1 = n_steps + 1
    t = np.zeros(n1)
    success = flags[:n1].copy()
    beta = np.zeros(n1)
    h_true = np.zeros((n1, N))
    hb = np.zeros((n1, N))
    states = np.zeros((n1, N, r))
    delta = np.zeros((n1, N))
    mu = np.zeros((n1, N))
    qarg = np.full((n1, N), np.nan)
    saturated = np.zeros(n1, dtype=bool)
    symbols = np.zeros((n1, N), dtype=np.int64)
    eso_err = np.zeros((n1, N, r + 1))
    coupling_log = np.zeros((n1, N))

    def record(k, hbar_k):
        t[k] = state.t
        beta[k] = scaling.beta
        h_true[k] = state.rho @ weights
        hb[k] = hbar_k
        states[k] = state.rho
        delta[k] = hbar_k - hbar_k.mean()
        mu[k] = hbar_k - codec.chi
        truth = np.concatenate(
            [state.rho, model.total_disturbance(state.rho, state.z, state.t)[:, None]], axis=1
        )
        eso_err[k] = state.rho_hat - truth

    def build(upto=None):
        extras = {"h_bar": hb, "coupling": coupling_log}
        extras.update({f"eso_err_{j + 1}": eso_err[:, :, j] for j in range(r + 1)})
        tr = SimTrace(t, success, beta, h_true, states, delta, mu, qarg, saturated, symbols, extras,
                      {"protocol": "zih", "model": model.name, "eps": params.eps, "substeps": substeps,
                       "beta_floor": scaling.floor})
        return tr if upto is None else tr.truncated(upto)

    record(0, h_bar(saturate_estimates(state.rho_hat, bounds), k_gains))
    for k in range(n_steps):
        coupling = params.c * codec.coupling() if flags[k] else np.zeros(N)
        coupling_log[k] = coupling
        try:
            state = integrate_interval(state, model, gains, bounds, k_gains, coupling, params.T, substeps, fast)
        except DivergenceError as exc:
            raise DivergenceError(getattr(exc, "message", str(exc)), k + 1, build(k)) from exc
        hbar = h_bar(saturate_estimates(state.rho_hat, bounds), k_gains)
        try:
            arg, sym, sat = codec.step(hbar, bool(flags[k + 1]))
        except QuantizerInputError as exc:
            raise DivergenceError(getattr(exc, "message", str(exc)), k + 1, build(k)) from exc
        qarg[k + 1] = arg
        if sym is not None:
            symbols[k + 1] = sym
        saturated[k + 1] = sat
        record(k + 1, hbar)
    tr = build()
    tr.meta["coherent"] = codec.coherent()
    return tr
