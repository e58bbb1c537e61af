"""Planning service tests."""
