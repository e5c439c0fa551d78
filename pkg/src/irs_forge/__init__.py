"""Tile-based intelligent reflecting surface modelling and optimization."""

__version__ = "0.1.0"
