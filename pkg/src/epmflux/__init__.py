"""End-point-measurement fluctuation theorems for small quantum systems."""

__version__ = "0.1.0"
