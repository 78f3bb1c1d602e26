"""Data-modelling tools for wastewater-based SARS-CoV-2 surveillance.

Normalization and outlier screening of plant-inlet samples, resampling and
smoothing of scattered series, lagged regression against epidemic
indicators, and short-term SES/AR forecasting with walk-forward evaluation.
"""

from .errors import ConfigError, DataError, NumericError, WBEError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericError", "WBEError", "__version__"]
