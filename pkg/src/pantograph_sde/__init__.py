"""Simulation and analysis of non-linear stochastic pantograph equations."""

__version__ = "0.1.0"
