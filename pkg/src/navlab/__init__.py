"""Navigability experiments on coherent geometries with bounded-cost random graphs."""

__version__ = "0.1.0"
