"""Exact Green's-function solvers for one-dimensional curve crossing with point couplings."""

__version__ = "0.1.0"
