"""Desk-scale numerical laboratory for near-flat graph geometry and discrete varifolds."""

__version__ = "0.1.0"
