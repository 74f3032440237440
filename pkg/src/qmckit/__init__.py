"""Lattice-rule construction and quasi-Monte Carlo estimators."""

__version__ = "0.1.0"
