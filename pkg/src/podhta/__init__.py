"""Reduced-order models and hierarchical Tucker surrogates for hyperelastic lattice UQ."""

__version__ = "0.1.0"
