"""Evolutionary KAN solvers for time-dependent PDEs."""

__version__ = "0.1.0"
