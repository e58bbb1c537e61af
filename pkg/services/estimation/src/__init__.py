"""
Estimation service for the robust-MDP toolkit.

Generative and offline sampling, frequency estimators of the transition
kernel and plug-in asymptotic inference for robust values.
"""

__version__ = "1.0.0"
