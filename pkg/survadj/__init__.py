"""Covariate-adjusted log-rank tests and hazard ratio estimation with prognostic scores."""

__version__ = "0.1.0"
