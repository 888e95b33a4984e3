"""Closed-form parameter conditions that guarantee an unsaturated quantizer and consensus."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from qconsensus.graph import Graph, GraphError, Spectrum, is_connected, rho_h, spectrum

VARIANTS = ("nonlinear_thm1", "nonlinear_thm2", "linear_thm3", "zizo_baseline")
GAMMA_MATCH_TOL = 1e-6


class ParamError(ValueError):
    pass


@dataclass
class ProtocolParams:
    variant: str
    c: float
    T: float
    gamma1: float
    beta0: float
    K: int
    k_gains: tuple[float, ...] = ()
    eps: float | None = None
    eps0: float | None = None
    C_h: float | None = None
    gamma2: float | None = None  # ZIZO zoom-out factor
    Kc: tuple[float, ...] | None = None  # ZIZO feedback gain

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParamError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.k_gains = tuple(float(k) for k in self.k_gains)
        if self.Kc is not None:
            self.Kc = tuple(float(k) for k in self.Kc)
        for name in ("c", "T", "beta0"):
            if not getattr(self, name) > 0:
                raise ParamError(f"{name} must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ParamError("K must be a positive integer")
        self.K = int(self.K)
        if not 0 < self.gamma1 < 1:
            raise ParamError("gamma1 must lie in (0, 1)")


def k1_bound(c: float, T: float, gamma1: float, d_star: float, N: int, lambdaN: float, rho: float) -> float:
    if gamma1 <= rho:
        raise ParamError("contraction violated: gamma1 must exceed rho_h")
    return (1 + 2 * c * T * d_star) / (2 * gamma1) + math.sqrt(N) * (c * T * lambdaN) ** 2 / (
        2 * gamma1 * (gamma1 - rho)
    )


def required_levels(K1: float) -> int:
    """Smallest admissible K for a given K1."""
    return math.floor(K1 - 0.5) + 1


def coupling_limit_for_levels(K: int, eps0: float, lambda2: float, lambdaN: float, d_star: float, N: int, T: float) -> float:
    if not 0 < eps0 < 1:
        raise ParamError("eps0 must lie in (0, 1)")
    denom = math.sqrt(N) * lambdaN**2 + 2 * eps0 * lambda2 * d_star + (2 * K + 1) * (1 - eps0) * eps0 * lambda2**2
    return 2 * K * eps0 * lambda2 / T / denom


def gamma1_from_margin(c: float, T: float, lambda2: float, eps0: float) -> float:
    return 1 - (1 - eps0) * c * T * lambda2


def beta0_min(variant: str, c: float, T: float, gamma1: float, rho: float, lambdaN: float, C_h: float, K: int) -> float:
    if gamma1 <= rho:
        raise ParamError("contraction violated: gamma1 must exceed rho_h")
    ctl = c * T * lambdaN
    if variant.startswith("nonlinear"):
        return max(2 * ctl * C_h / (gamma1 * (K + 0.5)), 4 * C_h * gamma1 * (gamma1 - rho) / ctl)
    if variant == "linear_thm3":
        return max(C_h / (K + 0.5), 2 * C_h * (gamma1 - rho) * (ctl + 2 * gamma1) / ctl)
    raise ParamError(f"no initial-scaling bound for variant {variant!r}")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    variant: str
    checks: list[Check] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append(Check(name, bool(passed), detail))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "within_theorem": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "values": {k: float(v) for k, v in self.values.items()},
        }

    def to_text(self) -> str:
        lines = [f"variant: {self.variant}", f"within_theorem: {str(self.passed).lower()}"]
        for key, val in self.values.items():
            lines.append(f"{key}: {val:.10g}")
        for c in self.checks:
            lines.append(f"check.{c.name}: {'pass' if c.passed else 'FAIL'}  ({c.detail})")
        return "\n".join(lines) + "\n"


def validate(params: ProtocolParams, g: Graph, spec: Spectrum | None = None) -> ValidationReport:
    """Evaluate every hypothesis of the selected variant; never raises for bad parameters."""
    rep = ValidationReport(params.variant)
    spec = spec if spec is not None else spectrum(g)
    connected = g.n_agents > 1 and is_connected(g, spec)
    rep.add("connected", connected, f"lambda2={spec.eigenvalues[1] if g.n_agents > 1 else float('nan'):.6g}")
    if not connected:
        return rep
    p = params
    lam2, lamN, N, d_star = spec.lambda2, spec.lambdaN, g.n_agents, g.d_star
    rho = rho_h(spec, p.c, p.T)
    rep.values.update(lambda2=lam2, lambdaN=lamN, d_star=d_star, rho_h=rho)

    if p.variant == "zizo_baseline":
        ok_gamma2 = p.gamma2 is not None and p.gamma2 > 1
        rep.add("zoom_out_factor", ok_gamma2, f"gamma2={p.gamma2}")
        rep.add("feedback_gain", p.Kc is not None, f"Kc={p.Kc}")
        if ok_gamma2:
            # fraction of failed steps the zoom balance can absorb
            rep.values["tolerable_dos_fraction"] = -math.log(p.gamma1) / (math.log(p.gamma2) - math.log(p.gamma1))
        return rep

    c_upper = 2 / (p.T * lamN)
    rep.add("coupling_gain_range", 0 < p.c < c_upper, f"c={p.c:g} in (0, {c_upper:.6g})")
    rep.add("contraction", rho < p.gamma1 < 1, f"gamma1={p.gamma1:g} in ({rho:.6g}, 1)")

    if p.variant in ("nonlinear_thm2", "linear_thm3"):
        if p.eps0 is None:
            rep.add("eps0_given", False, "eps0 is required")
        else:
            cm = coupling_limit_for_levels(p.K, p.eps0, lam2, lamN, d_star, N, p.T)
            c_lim = min(2 / (p.T * (lam2 + lamN)), cm)
            g_expected = gamma1_from_margin(p.c, p.T, lam2, p.eps0)
            rep.values.update(c_m=cm, c_limit=c_lim, gamma1_expected=g_expected)
            rep.add("coupling_gain_limit", 0 < p.c < c_lim, f"c={p.c:g} in (0, {c_lim:.6g})")
            rep.add(
                "gamma1_construction",
                abs(p.gamma1 - g_expected) <= GAMMA_MATCH_TOL,
                f"gamma1={p.gamma1:.10g} vs 1-(1-eps0)cT*lambda2={g_expected:.10g}",
            )

    if p.gamma1 > rho:
        K1 = k1_bound(p.c, p.T, p.gamma1, d_star, N, lamN, rho)
        rep.values.update(K1=K1, K_required=required_levels(K1))
        rep.add("quantizer_levels", p.K >= required_levels(K1), f"K={p.K} >= {required_levels(K1)} (K1={K1:.6g})")
        if p.C_h is None:
            rep.add("initial_bound_given", False, "C_h is required for the initial-scaling bound")
        else:
            b = beta0_min(p.variant, p.c, p.T, p.gamma1, rho, lamN, p.C_h, p.K)
            rep.values.update(C_h=p.C_h, beta0_min=b)
            rep.add("initial_scaling", p.beta0 > b, f"beta0={p.beta0:g} > {b:.6g}")
    if p.variant.startswith("nonlinear"):
        rep.add("observer_scale", p.eps is not None and 0 < p.eps < 1, f"eps={p.eps}")
    return rep


def params_for_levels(
    variant: str,
    K: int,
    eps0: float,
    g: Graph,
    T: float,
    C_h: float,
    c_fraction: float = 0.5,
    beta0_margin: float = 1.1,
    k_gains: Sequence[float] = (),
    eps: float | None = None,
) -> ProtocolParams:
    """Construct (c, gamma1, beta0) for a given K by the c_m recipe.

    c is ``c_fraction`` of the admissible upper limit, gamma1 follows from eps0, and beta0
    is ``beta0_margin`` times its lower bound.
    """
    spec = spectrum(g)
    if not spec.connected:
        raise GraphError("graph not connected")
    lam2, lamN = spec.lambda2, spec.lambdaN
    cm = coupling_limit_for_levels(K, eps0, lam2, lamN, g.d_star, g.n_agents, T)
    c = c_fraction * min(2 / (T * (lam2 + lamN)), cm)
    gamma1 = gamma1_from_margin(c, T, lam2, eps0)
    rho = rho_h(spec, c, T)
    b = beta0_min(variant, c, T, gamma1, rho, lamN, C_h, K)
    return ProtocolParams(
        variant=variant,
        c=c,
        T=T,
        gamma1=gamma1,
        beta0=max(beta0_margin * b, 1e-12),
        K=K,
        k_gains=tuple(k_gains),
        eps=eps,
        eps0=eps0,
        C_h=C_h,
    )


def initial_h_bound(h0: np.ndarray) -> float:
    """Smallest admissible C_h for the given initial outputs."""
    return float(np.max(np.abs(h0)))
