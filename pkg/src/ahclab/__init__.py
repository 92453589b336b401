"""Occupation-level augmentation indices, the dual-economy wage-equation
battery, and a synthetic generator with known structural parameters."""

from .reports import __version__

__all__ = ["__version__"]
