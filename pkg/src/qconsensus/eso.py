"""Extended state observer for a chain-of-integrators agent with an unknown total disturbance.

All functions broadcast over leading axes, so ``rho_hat`` may be (r+1,) for one agent or
(N, r+1) for a whole network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class EsoError(ValueError):
    pass


def observer_matrix(l_coeffs: Sequence[float]) -> np.ndarray:
    """Companion-like matrix with -l in the first column and a shifted identity to its right."""
    n = len(l_coeffs)
    E = np.zeros((n, n))
    E[:, 0] = -np.asarray(l_coeffs, dtype=float)
    E[:-1, 1:] += np.eye(n - 1)
    return E


@dataclass(frozen=True)
class EsoGains:
    l_coeffs: tuple[float, ...]
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "l_coeffs", tuple(float(v) for v in self.l_coeffs))
        if len(self.l_coeffs) < 2:
            raise EsoError("an observer needs at least two gains (r >= 1)")
        if not 0 < self.eps < 1:
            raise EsoError(f"eps must lie in (0, 1), got {self.eps}")
        eig = np.linalg.eigvals(self.E_matrix)
        if np.max(eig.real) >= -1e-9:
            raise EsoError(f"observer gains {self.l_coeffs} do not give a Hurwitz matrix (eigenvalues {eig})")

    @property
    def r(self) -> int:
        return len(self.l_coeffs) - 1

    @property
    def E_matrix(self) -> np.ndarray:
        return observer_matrix(self.l_coeffs)

    @property
    def injection(self) -> np.ndarray:
        """l_j / eps^j for j = 1..r+1."""
        j = np.arange(1, len(self.l_coeffs) + 1)
        return np.asarray(self.l_coeffs) / self.eps**j


@dataclass(frozen=True)
class SaturationBounds:
    M_bounds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "M_bounds", tuple(float(v) for v in self.M_bounds))
        if any(m <= 0 for m in self.M_bounds):
            raise EsoError("saturation bounds must be positive")


def eso_derivative(rho_hat, y, u, gains: EsoGains) -> np.ndarray:
    rho_hat = np.asarray(rho_hat, dtype=float)
    err = np.asarray(y, dtype=float) - rho_hat[..., 0]
    d = np.empty_like(rho_hat)
    d[..., :-1] = rho_hat[..., 1:]
    d[..., -1] = 0.0
    d[..., -2] += u
    d += gains.injection * err[..., None]
    return d


def saturate_estimates(rho_hat, bounds: SaturationBounds | Sequence[float]) -> np.ndarray:
    M = np.asarray(bounds.M_bounds if isinstance(bounds, SaturationBounds) else bounds, dtype=float)
    return M * np.clip(np.asarray(rho_hat, dtype=float) / M, -1.0, 1.0)


def h_bar(sat_estimates, k_gains: Sequence[float]) -> np.ndarray | float:
    """k_1 rho_1 + ... + k_{r-1} rho_{r-1} + rho_r from (saturated) estimates."""
    s = np.asarray(sat_estimates, dtype=float)
    r = len(k_gains) + 1
    if s.shape[-1] < r:
        raise EsoError(f"need at least {r} estimates, got {s.shape[-1]}")
    out = s[..., : r - 1] @ np.asarray(k_gains, dtype=float) + s[..., r - 1]
    return float(out) if np.ndim(out) == 0 else out
