"""Restoration of blurred, noisy QR barcode images via TV regularization."""

from .imgops import DimensionError, Kernel, Region

__version__ = "0.1.0"

__all__ = ["DimensionError", "Kernel", "Region", "__version__"]
