"""Symmetry discovery by flow matching over matrix Lie groups."""

__version__ = "0.1.0"
