"""Figure rendering for conformal-prediction sweep summaries."""

__version__ = "0.1.0"
