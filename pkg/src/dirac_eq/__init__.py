"""Spectral simulation and statistics of the free Dirac equation with random initial data."""

__version__ = "0.1.0"
