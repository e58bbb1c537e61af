"""
Planning service for the robust-MDP toolkit.

Non-robust dynamic programming, inner worst-case solvers for f-divergence
ambiguity sets, robust fixed-point solvers and closed-form theory.
"""

__version__ = "1.0.0"
