"""Reconstruction of missing metier labels in fishery landings data."""

__version__ = "0.1.0"
