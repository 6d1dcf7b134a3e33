"""Constrained moving-horizon estimation for air-data sensor fault diagnosis."""

__version__ = "1.0.0"
