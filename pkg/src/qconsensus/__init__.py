"""Quantized consensus of multi-agent systems under data-rate limits and DoS attacks.

Zooming-in-and-holding dynamic quantization for ESO-based nonlinear agents and
known linear agents, plus the zooming-in/zooming-out baseline.
"""

from qconsensus.graph import Graph, Spectrum, build_graph, rho_h, spectrum
from qconsensus.quantizer import QuantizerSpec, is_saturating, quantize, quantize_vec

__all__ = [
    "Graph",
    "Spectrum",
    "build_graph",
    "spectrum",
    "rho_h",
    "QuantizerSpec",
    "quantize",
    "quantize_vec",
    "is_saturating",
]

__version__ = "0.1.0"
