"""Ensemble simulation and density analysis for Galerkin-truncated stochastic Navier-Stokes."""

__version__ = "0.1.0"
