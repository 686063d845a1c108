"""Capacity limits of continuous-aperture-array two-user MISO links."""

__version__ = "0.1.0"
