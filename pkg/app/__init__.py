"""Numerical laboratory for global smoothing estimates of dispersive equations."""

__version__ = "1.0.0"
