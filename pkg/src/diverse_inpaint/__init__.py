"""Diverse image inpainting with spatially probabilistic diversity normalization."""

__version__ = "0.1.0"
