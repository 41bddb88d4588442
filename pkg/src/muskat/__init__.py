"""Numerical laboratory for the Muskat slope equation with corner initial data."""

__version__ = "0.1.0"
