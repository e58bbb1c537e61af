"""
Array-backed domain models shared across services.
"""

from services.shared.models.mdp import (
    MdpDocument,
    Policy,
    PolicyKind,
    QFunction,
    TabularMdp,
    ValueFunction,
    dump_mdp,
    load_mdp,
    validate_mdp,
)

__all__ = [
    "MdpDocument",
    "Policy",
    "PolicyKind",
    "QFunction",
    "TabularMdp",
    "ValueFunction",
    "dump_mdp",
    "load_mdp",
    "validate_mdp",
]
