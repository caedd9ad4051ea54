"""Causal variational principles and surface layer conservation laws."""

__version__ = "0.1.0"
