"""Simulator and protocol library for Byzantine-tolerant peer sampling."""

__version__ = "0.1.0"
