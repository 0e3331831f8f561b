"""Momentum-contrast self-supervised pretraining for multivariate time series, in numpy."""

__version__ = "0.1.0"
