"""Utility modules."""

