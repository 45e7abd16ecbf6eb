"""Orthogonal-duality toolkit for independent random walkers and exclusion."""

__version__ = "0.1.0"
