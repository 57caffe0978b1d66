"""Tests for the R-EDDPC toolkit."""
