"""Numerical certificates for a two-weight example built on a band-flattened 1/x kernel."""

__version__ = "0.1.0"
