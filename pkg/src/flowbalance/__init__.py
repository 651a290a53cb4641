"""Resampling benchmark harness for imbalanced multi-class NetFlow classification."""

__version__ = "0.1.0"
