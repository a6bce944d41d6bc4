"""Synthetic left-ventricle mesh generation and evaluation toolkit."""

__version__ = "0.1.0"
