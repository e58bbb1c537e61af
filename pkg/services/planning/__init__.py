"""
Planning service.
"""
