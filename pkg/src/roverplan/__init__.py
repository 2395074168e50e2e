"""Energy-aware joint planning and simulation for multi-robot grid exploration."""

__version__ = "0.1.0"
