"""Validation harness for information-fusion engines under deception."""

__version__ = "0.1.0"
