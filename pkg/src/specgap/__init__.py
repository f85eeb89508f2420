"""Numerical laboratory for spectral gaps of periodic magnetic Schrodinger operators."""

__version__ = "0.1.0"
