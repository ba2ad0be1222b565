"""Numerical laboratory for the CR structure at infinity of ACH manifolds."""

__version__ = "0.1.0"
