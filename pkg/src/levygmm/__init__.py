"""Estimation of jump activity indices, asymmetry and volatility of Lévy processes."""

__version__ = "0.1.0"
