"""Multi-objective discovery of systems of partial differential equations from gridded data."""

__version__ = "1.0.0"
