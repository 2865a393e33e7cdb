"""Worst-case-aware curriculum learning for multilingual dependency parsing."""

__version__ = "0.1.0"
