"""Known linear agents in controllable canonical form under ZIH or the ZIZO baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qconsensus.codec import ScalingState, ZihNetworkCodec, advance_scaling_zizo
from qconsensus.graph import Graph
from qconsensus.params import ProtocolParams
from qconsensus.quantizer import QuantizerInputError, QuantizerSpec, is_saturating, quantize_vec
from qconsensus.trace import DivergenceError, SimTrace

DEFAULT_BETA_FLOOR_REL = 1e-12


def companion(last_row: Sequence[float]) -> np.ndarray:
    """Shift matrix with ``last_row`` as its bottom row."""
    r = len(last_row)
    A = np.zeros((r, r))
    if r > 1:
        A[:-1, 1:] = np.eye(r - 1)
    A[-1, :] = last_row
    return A


@dataclass(frozen=True)
class LinearPlant:
    """x(k+1) = A x(k) + B u(k) with A = companion(-a)."""

    a_coeffs: tuple[float, ...]

    @classmethod
    def from_last_row(cls, row: Sequence[float]) -> "LinearPlant":
        return cls(tuple(-float(v) for v in row))

    @property
    def r(self) -> int:
        return len(self.a_coeffs)

    @property
    def A(self) -> np.ndarray:
        return companion([-a for a in self.a_coeffs])

    @property
    def B(self) -> np.ndarray:
        b = np.zeros(self.r)
        b[-1] = 1.0
        return b


class HTransformError(ValueError):
    pass


@dataclass(frozen=True)
class HTransform:
    """h = k_1 x_1 + ... + k_{r-1} x_{r-1} + x_r and the stable chain it leaves behind."""

    k_gains: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "k_gains", tuple(float(k) for k in self.k_gains))
        if not self.k_gains:
            return
        eig = np.linalg.eigvals(self.A_tilde)
        if np.any(np.abs(eig.imag) > 1e-12):
            raise HTransformError(f"chain eigenvalues must be real, got {eig}")
        lam = np.sort(eig.real)
        if np.any(np.diff(lam) <= 1e-9):
            raise HTransformError(f"chain eigenvalues must be distinct, got {lam}")
        if np.any(np.abs(lam) >= 1.0):
            raise HTransformError(f"chain eigenvalues must lie inside the unit circle, got {lam}")

    @property
    def r(self) -> int:
        return len(self.k_gains) + 1

    @property
    def A_tilde(self) -> np.ndarray:
        return companion([-k for k in self.k_gains])

    @property
    def B_tilde(self) -> np.ndarray:
        b = np.zeros(self.r - 1)
        if self.r > 1:
            b[-1] = 1.0
        return b

    @property
    def weights(self) -> np.ndarray:
        return np.array(self.k_gains + (1.0,))

    def h_of(self, x: np.ndarray) -> np.ndarray:
        """h for states of shape (..., r)."""
        return x @ self.weights


def predict_consensus_value(ht: HTransform, initial_states) -> np.ndarray:
    """Common limit of every agent's state under ZIH, from the preserved average of h."""
    x0 = np.atleast_2d(np.asarray(initial_states, dtype=float))
    h_star = float(np.mean(ht.h_of(x0)))
    if ht.r == 1:
        return np.array([h_star])
    m = np.eye(ht.r - 1) - ht.A_tilde
    if np.linalg.cond(m) > 1e12:
        raise HTransformError("I - A_tilde is numerically singular")
    y = np.linalg.solve(m, ht.B_tilde)
    last = 1.0 + ht.A_tilde[-1] @ y
    return np.concatenate([y, [last]]) * h_star


class _Recorder:
    def __init__(self, n_steps: int, N: int, r: int, zizo: bool):
        shape_err = (n_steps + 1, N, r) if zizo else (n_steps + 1, N)
        self.t = np.zeros(n_steps + 1)
        self.success = np.zeros(n_steps + 1, dtype=bool)
        self.beta = np.zeros(n_steps + 1)
        self.h = np.zeros((n_steps + 1, N))
        self.states = np.zeros((n_steps + 1, N, r))
        self.delta = np.zeros(shape_err)
        self.mu = np.zeros(shape_err)
        self.qarg = np.full((n_steps + 1, N), np.nan)
        self.saturated = np.zeros(n_steps + 1, dtype=bool)
        self.symbols = np.zeros(shape_err, dtype=np.int64)
        self.extras: dict[str, np.ndarray] = {}

    def build(self, upto: int | None = None, meta=None) -> SimTrace:
        tr = SimTrace(
            self.t, self.success, self.beta, self.h, self.states, self.delta, self.mu,
            self.qarg, self.saturated, self.symbols, self.extras, dict(meta or {}),
        )
        return tr if upto is None else tr.truncated(upto)


def run_linear(
    plant: LinearPlant,
    g: Graph,
    params: ProtocolParams,
    initial_states,
    success_flags: Sequence[bool],
    n_steps: int,
    protocol: str = "zih",
    beta_floor: float | None = None,
    check_h_consistency: bool = True,
) -> SimTrace:
    """Simulate ``n_steps`` sampling periods.

    ``success_flags[k]`` tells whether the transmission at kT got through; it needs
    ``n_steps + 1`` entries and entry 0 must be True.  For ZIH ``beta_floor`` defaults to
    1e-12 * max(1, C_h): once the scaling is below the spacing of doubles around h the
    quantizer would only see rounding noise.
    """
    x0 = np.array(initial_states, dtype=float)
    N, r = x0.shape
    if N != g.n_agents:
        raise ValueError(f"{N} initial states for {g.n_agents} agents")
    if r != plant.r:
        raise ValueError(f"initial states have {r} components, plant order is {plant.r}")
    flags = np.asarray(success_flags, dtype=bool)
    if len(flags) < n_steps + 1:
        raise ValueError(f"need {n_steps + 1} success flags, got {len(flags)}")
    if n_steps >= 0 and len(flags) and not flags[0]:
        raise ValueError("the transmission at k=0 must succeed")
    if protocol == "zih":
        return _run_zih(plant, g, params, x0, flags, n_steps, beta_floor, check_h_consistency)
    if protocol == "zizo":
        return _run_zizo(plant, g, params, x0, flags, n_steps)
    raise ValueError(f"unknown protocol {protocol!r}")


def zih_linear_step(x, h, codec: ZihNetworkCodec, plant: LinearPlant, ht: HTransform, c, T, success_now, success_next):
    """One period of the ZIH linear protocol.

    The control at kT cancels the plant's own dynamics and adds h plus the decoded
    coupling (absent when the transmission at kT failed), which makes
    h(k+1) = h(k) + cT * coupling exactly.  The h value is carried forward by that
    recursion; the plant state is stepped with its real dynamics.
    Returns ``(x_next, h_next, argument, symbols, saturated)``.
    """
    coupling = codec.coupling() if success_now else np.zeros_like(h)
    drive = c * T * coupling
    a = np.asarray(plant.a_coeffs)
    k = np.asarray(ht.k_gains)
    u = -(x[:, 1:] @ k) + x @ a + h + drive
    x_next = np.empty_like(x)
    x_next[:, :-1] = x[:, 1:]
    x_next[:, -1] = -(x @ a) + u
    h_next = h + drive
    arg, symbols, saturated = codec.step(h_next, success_next)
    return x_next, h_next, arg, symbols, saturated


def _run_zih(plant, g, params, x0, flags, n_steps, beta_floor, check_h):
    ht = HTransform(params.k_gains)
    if ht.r != plant.r:
        raise ValueError(f"{len(params.k_gains)} k_gains given for a plant of order {plant.r}")
    N, r = x0.shape
    spec = QuantizerSpec(params.K)
    if beta_floor is None:
        beta_floor = DEFAULT_BETA_FLOOR_REL * max(1.0, params.C_h or 0.0, float(np.max(np.abs(x0))))
    scaling = ScalingState(beta=params.beta0, gamma1=params.gamma1, floor=beta_floor)
    codec = ZihNetworkCodec(g.adjacency, scaling, spec)
    rec = _Recorder(n_steps, N, r, zizo=False)
    rec.extras["chi"] = np.zeros((n_steps + 1, N))

    x = x0.copy()
    h = ht.h_of(x)
    h_consistency = 0.0

    def record(k, arg=None, symbols=None, sat=False):
        rec.t[k] = k * params.T
        rec.success[k] = flags[k]
        rec.beta[k] = scaling.beta
        rec.h[k] = h
        rec.states[k] = x
        rec.delta[k] = h - h.mean()
        rec.mu[k] = h - codec.chi
        rec.extras["chi"][k] = codec.chi
        if arg is not None:
            rec.qarg[k] = arg
        if symbols is not None:
            rec.symbols[k] = symbols
        rec.saturated[k] = sat

    record(0)
    meta = {"protocol": "zih", "beta_floor": beta_floor}
    for k in range(n_steps):
        try:
            x, h, arg, symbols, sat = zih_linear_step(
                x, h, codec, plant, ht, params.c, params.T, flags[k], flags[k + 1]
            )
        except QuantizerInputError as exc:
            raise DivergenceError(getattr(exc, "message", str(exc)), k + 1, rec.build(k, meta)) from exc
        if not np.all(np.isfinite(x)):
            raise DivergenceError("plant state is no longer finite", k + 1, rec.build(k, meta))
        if check_h:
            gap = float(np.max(np.abs(ht.h_of(x) - h)) / (1.0 + np.max(np.abs(x))))
            h_consistency = max(h_consistency, gap)
        record(k + 1, arg, symbols, sat)
    meta["h_consistency"] = h_consistency
    meta["coherent"] = codec.coherent()
    return rec.build(meta=meta)


def zizo_linear_step(x, x_hat, A, B, lap, Kc, scaling: ScalingState, spec, success_next):
    """One period of the ZIZO baseline for all agents.

    u_i = Kc sum_j a_ij (x_hat_j - x_hat_i), always applied.  Returns
    ``(x_next, x_hat_next, argument, symbols, saturated)`` with ``argument`` the
    per-agent infinity norm of the quantizer input.
    """
    u = -(lap @ x_hat) @ Kc
    x_next = x @ A.T + u[:, None] * B[None, :]
    beta = scaling.beta
    raw = (x_next - x_hat) / beta
    if not np.all(np.isfinite(raw)):
        raise QuantizerInputError("non-finite value reached the encoder")
    arg = np.max(np.abs(raw), axis=1)
    if success_next:
        symbols = quantize_vec(spec, raw)
        x_hat_next = x_hat @ A.T + beta * symbols
        saturated = bool(np.any(is_saturating(spec, raw)))
    else:
        symbols = None
        x_hat_next = x_hat @ A.T
        saturated = False
    advance_scaling_zizo(scaling, success_next)
    return x_next, x_hat_next, arg, symbols, saturated


def _run_zizo(plant, g, params, x0, flags, n_steps):
    if params.Kc is None or len(params.Kc) != plant.r:
        raise ValueError(f"ZIZO needs a feedback gain Kc of length {plant.r}")
    if params.gamma2 is None:
        raise ValueError("ZIZO needs gamma2")
    N, r = x0.shape
    A, B = plant.A, plant.B
    Kc = np.asarray(params.Kc)
    lap = g.laplacian
    spec = QuantizerSpec(params.K)
    scaling = ScalingState(beta=params.beta0, gamma1=params.gamma1, gamma2=params.gamma2)
    rec = _Recorder(n_steps, N, r, zizo=True)
    x = x0.copy()
    x_hat = np.zeros_like(x)
    weights = None
    if params.k_gains and len(params.k_gains) == r - 1:
        weights = np.array(tuple(params.k_gains) + (1.0,))

    def record(k, arg=None, symbols=None, sat=False):
        rec.t[k] = k * params.T
        rec.success[k] = flags[k]
        rec.beta[k] = scaling.beta
        rec.h[k] = x @ weights if weights is not None else x[:, -1]
        rec.states[k] = x
        rec.delta[k] = x - x.mean(axis=0)
        rec.mu[k] = x - x_hat
        if arg is not None:
            rec.qarg[k] = arg
        if symbols is not None:
            rec.symbols[k] = symbols
        rec.saturated[k] = sat

    record(0)
    meta = {"protocol": "zizo"}
    for k in range(n_steps):
        try:
            x, x_hat, arg, symbols, sat = zizo_linear_step(x, x_hat, A, B, lap, Kc, scaling, spec, flags[k + 1])
        except QuantizerInputError as exc:
            raise DivergenceError(getattr(exc, "message", str(exc)), k + 1, rec.build(k, meta)) from exc
        if not (np.all(np.isfinite(x)) and np.isfinite(scaling.beta)):
            raise DivergenceError("state or scaling is no longer finite", k + 1, rec.build(k, meta))
        record(k + 1, arg, symbols, sat)
    return rec.build(meta=meta)
