"""Repeated sampling of random subsets (RS2) for per-round data selection."""

from rs2.core import ConfigError, Dataset, NumericError, ParseError, Rng, ShapeError

__all__ = ["ConfigError", "Dataset", "NumericError", "ParseError", "Rng", "ShapeError"]
__version__ = "0.1.0"
