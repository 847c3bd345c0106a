"""Immersed boundary conditions posed as a PDE-constrained inverse problem."""

__version__ = "0.1.0"
