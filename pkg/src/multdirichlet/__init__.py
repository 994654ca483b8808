"""Computational toolkit for uniform multiplicative Diophantine approximation."""

__version__ = "0.1.0"
