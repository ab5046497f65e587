"""Spatial-lag feature pipeline and model comparison for parcel sale prediction."""

__version__ = "0.1.0"
