"""Regime-aware probabilistic day-ahead price forecasting and battery dispatch."""

__version__ = "0.1.0"
