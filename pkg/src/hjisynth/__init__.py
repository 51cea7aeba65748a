"""Robust optimal feedback synthesis via polynomial Galerkin policy iteration."""

__version__ = "0.1.0"
