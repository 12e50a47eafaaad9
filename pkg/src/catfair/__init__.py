"""Fairness audits of categorical encodings of protected attributes."""

__version__ = "0.1.0"
