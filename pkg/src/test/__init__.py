"""Test package (contains unit tests)."""

__all__ = []
