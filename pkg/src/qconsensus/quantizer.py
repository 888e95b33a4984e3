"""Symmetric uniform quantizer with 2K+1 levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QuantizerInputError(ValueError):
    """Non-finite quantizer input, which always means something upstream diverged."""


@dataclass(frozen=True)
class QuantizerSpec:
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")

    @property
    def levels(self) -> int:
        return 2 * self.K + 1

    @property
    def bits_per_symbol(self) -> int:
        # ceil(log2(2K+1)) without going through floating point
        return (2 * self.K).bit_length()

    @property
    def band(self) -> float:
        """Inputs with magnitude below this are represented with error at most 1/2."""
        return self.K + 0.5


def _as_int(spec: QuantizerSpec | int) -> int:
    return spec.K if isinstance(spec, QuantizerSpec) else int(spec)


def quantize(spec: QuantizerSpec | int, v: float) -> int:
    K = _as_int(spec)
    v = float(v)
    if not np.isfinite(v):
        raise QuantizerInputError(f"quantizer input is not finite: {v}")
    mag = abs(v)
    whole = np.floor(mag)
    # floor(mag + 0.5) can round up for mag just below a half-integer
    level = int(whole) + (1 if mag - whole >= 0.5 else 0)
    level = min(level, K)
    return -level if v < 0 else level


def quantize_vec(spec: QuantizerSpec | int, v) -> np.ndarray:
    K = _as_int(spec)
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise QuantizerInputError("quantizer input contains non-finite entries")
    mag = np.abs(v)
    whole = np.floor(mag)
    level = np.minimum(whole + (mag - whole >= 0.5), K).astype(np.int64)
    return np.where(v < 0, -level, level)


def is_saturating(spec: QuantizerSpec | int, v) -> bool | np.ndarray:
    K = _as_int(spec)
    out = np.abs(np.asarray(v, dtype=float)) >= K + 0.5
    return bool(out) if out.ndim == 0 else out
