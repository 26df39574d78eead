"""Lattice pairwise-interaction energies on perforated domains."""

__version__ = "0.1.0"
