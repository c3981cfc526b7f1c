"""Spacelike graphic translating solitons in pseudo-Euclidean space."""

__version__ = "0.1.0"
