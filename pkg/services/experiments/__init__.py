"""
Experiments service.
"""
