"""
Experiments service for the robust-MDP toolkit.

Random MDP generation, the convergence and coverage experiments and the
robustmdp command-line interface.
"""

__version__ = "1.0.0"
