"""Numerical laboratory for a hyperkahler moment-map flow of surfaces."""

__version__ = "0.1.0"
