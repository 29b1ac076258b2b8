"""Numerical laboratory for the variance of random real algebraic zero sets."""
__version__ = "0.1.0"
