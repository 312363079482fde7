"""Symbolic and numeric toolkit for equivalence groups of linear ODEs."""

__version__ = "0.1.0"
