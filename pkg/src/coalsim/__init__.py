"""Simulation of spatial Lambda-coalescents."""

__version__ = "0.1.0"
