"""Retrieval-augmented code completion and clone retrieval over a small Python-like language."""

__version__ = "0.1.0"
