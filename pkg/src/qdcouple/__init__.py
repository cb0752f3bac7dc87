"""Quantum-dot single-photon source to fiber coupling simulations."""

__version__ = "0.1.0"
