"""Driven anharmonic chains between two heat baths: simulation and analysis."""

__version__ = "0.1.0"
