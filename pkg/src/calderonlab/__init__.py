"""Numerical toolkit for Calderon-type inverse problems in the plane."""

__version__ = "0.1.0"
