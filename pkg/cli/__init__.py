"""Experiment driver for the Alt-Phillips lab."""
__version__ = "0.1.0"
