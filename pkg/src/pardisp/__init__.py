"""Solver for second-order parabolic systems with third-order dispersion on the half-line."""

__version__ = "0.1.0"
