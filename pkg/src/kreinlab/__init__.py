"""Markovian self-adjoint extensions of elliptic operators on small grids."""

__version__ = "0.1.0"
