"""Finite-volume laboratory for disordered gradient interface models."""

__version__ = "0.1.0"
