"""Regularized explicit data-driven predictive control toolkit."""
