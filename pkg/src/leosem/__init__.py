"""Hybrid bit / generative-semantic transmission over LEO-UAV-ground networks."""

__version__ = "0.1.0"
