"""
Enumerations for the finite-horizon MDP layer.

Follows the same ``str, Enum`` pattern so values serialize directly
into the JSON problem documents.
"""
from __future__ import annotations

from enum import Enum


class ConstraintForm(str, Enum):
    """The three tractable constraint forms accepted by ``convexify``."""
    CONVEX_RHO = "convex_rho"          # convex in the marginals ρ^t
    CONVEX_JOINT = "convex_joint"      # convex in the joints M^t (and ρ^t)
    LINEAR_COLUMN = "linear_column"    # Σ_i α_i Π^t_(i,j) − β <= 0 on one column


class VariableKind(str, Enum):
    RHO = "rho"   # ρ^t_i,     t = 0..T
    M = "M"       # M^t_(i,j), t = 0..T-1


# Forms whose payload is an expression over program variables
EXPRESSION_FORMS = {ConstraintForm.CONVEX_RHO, ConstraintForm.CONVEX_JOINT}
