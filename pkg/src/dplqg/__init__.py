"""Differentially private multi-agent LQG tracking control."""

__version__ = "0.1.0"
