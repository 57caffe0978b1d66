"""Persistence of explicit laws and run results."""
