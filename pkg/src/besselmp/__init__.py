"""Simulation and verification tools for low-dimensional Bessel processes."""

__version__ = "0.1.0"
