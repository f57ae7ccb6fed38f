"""Normalized solitary waves of coupled cubic Schrodinger systems on R^3."""

__version__ = "0.1.0"
