"""Private zero-order dataset condensation for tabular models."""

__version__ = "0.1.0"
