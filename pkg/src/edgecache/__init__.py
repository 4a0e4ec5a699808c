"""Desk-scale simulator for multi-layer edge-caching wireless networks."""

__version__ = "0.1.0"
