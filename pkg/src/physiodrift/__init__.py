"""Wearable-signal arousal pipeline with cross-period drift analysis."""

__version__ = "0.1.0"
