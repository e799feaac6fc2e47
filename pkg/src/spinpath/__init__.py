"""Spin-1/2 coherent-state path integrals checked against the exact 2x2 propagator."""

from .exact_oracle import FieldProtocol, matrix_element, propagate
from .su2_core import CHI_MINUS_PHI, CHI_ZERO, CoherentLabel, GaugeSection, coherent_state, overlap

__version__ = "0.1.0"

__all__ = [
    "CHI_MINUS_PHI", "CHI_ZERO", "CoherentLabel", "FieldProtocol", "GaugeSection", "coherent_state",
    "matrix_element", "overlap", "propagate",
]
