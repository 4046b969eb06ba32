"""Simulation and verification tools for the one-dimensional symmetric simple
exclusion process: exact kinetic Monte Carlo, the discrete and continuum heat
equations, Gaussian covariance quadrature and a Monte Carlo harness."""

__version__ = "0.1.0"
