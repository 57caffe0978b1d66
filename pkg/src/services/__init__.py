"""Service layer."""

