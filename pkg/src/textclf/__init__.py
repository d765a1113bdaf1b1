"""Transformer-based text classification for short insurance-style documents."""

__version__ = "0.1.0"
