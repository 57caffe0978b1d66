"""Trajectory ingestion and Hankel-matrix machinery."""
