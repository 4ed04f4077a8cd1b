"""Simulator of deterministic secure communication over the squeezing phase of two-mode squeezed states."""

__version__ = "0.1.0"
