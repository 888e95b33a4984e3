"""Encoder/decoder state machines for zooming-in-and-holding (ZIH) and zooming-in/zooming-out (ZIZO).

The per-agent functions mutate their state in place and return the emitted symbol, or
``HELD`` when the transmission failed.  ``ZihNetworkCodec`` runs all agents and all edge
decoders of a network at once; it is built from the same arithmetic so that a run through
it is bit-identical to composing the per-agent functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qconsensus.quantizer import QuantizerInputError, QuantizerSpec, is_saturating, quantize, quantize_vec

HELD = None


class ProtocolViolation(RuntimeError):
    """Encoder and decoder disagreed about whether a step was acknowledged."""


@dataclass
class ScalingState:
    beta: float
    gamma1: float
    gamma2: float = 1.0
    floor: float = 0.0
    beta0: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("initial scaling must be positive")
        if self.beta0 is None:
            self.beta0 = self.beta


def advance_scaling_zih(s: ScalingState, success: bool) -> ScalingState:
    if success:
        s.beta = max(s.gamma1 * s.beta, s.floor)
    return s


def advance_scaling_zizo(s: ScalingState, success: bool) -> ScalingState:
    s.beta = s.gamma1 * s.beta if success else s.gamma2 * s.beta
    return s


@dataclass
class ZihEncoderState:
    scaling: ScalingState
    chi: float = 0.0


@dataclass
class ZihDecoderState:
    h_hat: float = 0.0


def _check_finite(x) -> None:
    if not np.all(np.isfinite(x)):
        raise QuantizerInputError("non-finite value reached the encoder")


def zih_encode_step(enc: ZihEncoderState, h_new: float, success: bool, spec: QuantizerSpec):
    _check_finite(h_new)
    if not success:
        return HELD
    beta = enc.scaling.beta
    symbol = quantize(spec, (h_new - enc.chi) / beta)
    enc.chi = enc.chi + beta * symbol
    return symbol


def zih_decode_step(dec: ZihDecoderState, symbol, beta: float, success: bool | None = None) -> ZihDecoderState:
    if success is not None and (symbol is not HELD) != bool(success):
        raise ProtocolViolation("symbol presence does not match the acknowledgement")
    if symbol is not HELD:
        dec.h_hat = dec.h_hat + beta * symbol
    return dec


def quantizer_argument(enc, value) -> float:
    """Quantizer input an encoder would see for ``value``, without touching the state."""
    if isinstance(enc, ZizoEncoderState):
        return float(np.max(np.abs((np.asarray(value, float) - enc.x_hat) / enc.scaling.beta)))
    return (float(value) - enc.chi) / enc.scaling.beta


@dataclass
class ZizoEncoderState:
    scaling: ScalingState
    x_hat: np.ndarray

    @classmethod
    def zeros(cls, scaling: ScalingState, r: int) -> "ZizoEncoderState":
        return cls(scaling, np.zeros(r))


def zizo_encode_step(enc: ZizoEncoderState, x_new, success: bool, A: np.ndarray, spec: QuantizerSpec):
    """One ZIZO step for a single agent.

    The shared scaling is advanced separately with ``advance_scaling_zizo`` once every
    agent has encoded, exactly as for ZIH.
    """
    x_new = np.asarray(x_new, dtype=float)
    _check_finite(x_new)
    beta = enc.scaling.beta
    if success:
        symbol = quantize_vec(spec, (x_new - enc.x_hat) / beta)
        enc.x_hat = A @ enc.x_hat + beta * symbol
    else:
        symbol = HELD
        enc.x_hat = A @ enc.x_hat
    return symbol


class ZihNetworkCodec:
    """All ZIH encoders plus the decoders on every directed edge of a network.

    ``h_hat[j, i]`` is agent i's copy of agent j's encoder state (only meaningful on edges).
    """

    def __init__(self, adjacency: np.ndarray, scaling: ScalingState, spec: QuantizerSpec):
        self.adjacency = np.asarray(adjacency, dtype=float)
        n = self.adjacency.shape[0]
        self.scaling = scaling
        self.spec = spec
        self.chi = np.zeros(n)
        self.h_hat = np.zeros((n, n))

    def argument(self, h_new: np.ndarray) -> np.ndarray:
        return (h_new - self.chi) / self.scaling.beta

    def step(self, h_new: np.ndarray, success: bool):
        """Encode, transmit and decode one step, then advance the shared scaling.

        Returns ``(argument, symbols or HELD, saturated)``; the argument is what the
        quantizer saw (or would have seen on a failed step).
        """
        _check_finite(h_new)
        beta = self.scaling.beta
        arg = (h_new - self.chi) / beta
        saturated = bool(np.any(is_saturating(self.spec, arg))) if success else False
        if success:
            symbols = quantize_vec(self.spec, arg)
            self.chi = self.chi + beta * symbols
            # every neighbor of j applies the same increment to its copy of chi_j
            self.h_hat = self.h_hat + (beta * symbols)[:, None] * self.adjacency
        else:
            symbols = HELD
        advance_scaling_zih(self.scaling, success)
        return arg, symbols, saturated

    def coupling(self) -> np.ndarray:
        """sum_j a_ij (h_hat_ji - chi_i) for every agent i."""
        received = np.einsum("ji,ji->i", self.adjacency, self.h_hat)
        return received - self.adjacency.sum(axis=0) * self.chi

    def coherent(self) -> bool:
        """Decoder copies equal the encoder states bit-exactly on every edge."""
        mask = self.adjacency > 0
        return bool(np.all(self.h_hat[mask] == np.broadcast_to(self.chi[:, None], self.h_hat.shape)[mask]))
