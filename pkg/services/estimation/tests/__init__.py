"""Estimation service tests."""
