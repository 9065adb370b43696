"""Spectral goodness-of-fit tests for network models."""

__version__ = "0.1.0"
