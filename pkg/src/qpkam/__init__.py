"""Quasi-periodic invariant tori near a degenerate zero-Hopf equilibrium."""
__version__ = "0.1.0"
