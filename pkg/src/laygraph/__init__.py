"""Layout-graph construction and graph-attention sequence tagging."""

__version__ = "0.1.0"
