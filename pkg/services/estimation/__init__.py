"""
Estimation service.
"""
