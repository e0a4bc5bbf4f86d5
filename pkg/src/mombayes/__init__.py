"""Robust Bayesian inference via a blockwise median-of-means likelihood proxy."""

__version__ = "0.1.0"
