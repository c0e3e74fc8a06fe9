"""Transformer hidden-state exporter for the .lgem embedding format."""

__version__ = "0.1.0"
