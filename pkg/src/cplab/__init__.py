"""Split conformal prediction benchmark lab."""

__version__ = "0.1.0"
