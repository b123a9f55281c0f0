"""Trace-driven uncertainty, evergreen-ness and self-knowledge evaluation."""

__version__ = "0.1.0"
