"""layoutmuse: aesthetic visual-guidance layout engine."""

__version__ = "0.1.0"
