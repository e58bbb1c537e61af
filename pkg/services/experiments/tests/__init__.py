"""Experiments service tests."""
