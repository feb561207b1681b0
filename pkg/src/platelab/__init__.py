"""Numerical laboratory for the clamped bi-Laplace operator."""

__version__ = "0.1.0"
