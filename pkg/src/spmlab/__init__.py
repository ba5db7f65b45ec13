"""Spectral toolkit and Monte Carlo harness for stochastic porous-media equations on finite measure spaces."""

__version__ = "0.1.0"
