"""Explainable boosting machines for EMA studies."""

__version__ = "0.1.0"
