"""Incremental detection of speech repairs and edit terms."""

__version__ = "0.1.0"
