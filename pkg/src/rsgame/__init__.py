"""Finite-difference solver for two-player risk-sensitive ergodic games."""

__version__ = "0.1.0"
