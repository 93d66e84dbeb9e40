"""Spectral ground-state solver for the average-field-Pauli functional."""

__version__ = "0.1.0"
