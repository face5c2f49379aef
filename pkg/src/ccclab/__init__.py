"""Desk-scale laboratory for Bell correlations, postselection and constrained colliders."""

__version__ = "0.1.0"
