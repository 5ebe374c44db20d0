"""Stochastic phase-field fracture of elastic-plastic heterogeneous solids."""

__version__ = "0.1.0"
