"""Simulation and analysis of anti-jamming polarization ghost imaging."""

__version__ = "0.1.0"
