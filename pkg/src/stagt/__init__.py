"""Spatial-temporal-aware graph transformer for transaction fraud detection."""

__version__ = "0.1.0"
