"""
Inner worst-case problems over f-divergence ambiguity sets.
"""

from services.planning.src.ambiguity.base import (
    AmbiguitySpec,
    Divergence,
    DualSolution,
    Rectangularity,
    WorstCaseDistribution,
    chi2_scale,
    divergence,
)
from services.planning.src.ambiguity.q_inverse import INFEASIBLE, q_inverse
from services.planning.src.ambiguity.s_rectangular import (
    s_l1_dual_objective,
    s_support_inf,
    s_worst_case,
)
from services.planning.src.ambiguity.sa_rectangular import (
    l1_sorted_threshold,
    sa_support_inf,
    sa_worst_case,
)

__all__ = [
    "AmbiguitySpec",
    "Divergence",
    "DualSolution",
    "INFEASIBLE",
    "Rectangularity",
    "WorstCaseDistribution",
    "chi2_scale",
    "divergence",
    "l1_sorted_threshold",
    "q_inverse",
    "s_l1_dual_objective",
    "s_support_inf",
    "s_worst_case",
    "sa_support_inf",
    "sa_worst_case",
]
