"""Quickest search over multiple sequences with single and mixed observations."""

__version__ = "0.1.0"
