"""
robust-mdp services.
"""
