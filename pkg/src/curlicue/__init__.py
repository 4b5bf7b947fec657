"""Theta sums, curlicues and even-continued-fraction renormalization."""

__version__ = "0.1.0"
