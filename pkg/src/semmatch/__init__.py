"""Semantic-conditioned local feature matching."""

__version__ = "0.1.0"
