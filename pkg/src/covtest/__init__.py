"""Tests of linear hypotheses about covariance matrices in multi-group designs."""

__version__ = "0.1.0"
