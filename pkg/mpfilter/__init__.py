"""Particle filters for diffusions observed through marked point processes."""

__version__ = "1.0.0"
