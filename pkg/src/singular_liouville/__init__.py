"""Numerical companion for non-simple blow-up of a singular Liouville equation on the unit disk."""

from .potential import EXAMPLE, CONSTANT, PotentialCoeffs, check_hypotheses, eval_V, eval_V_half
from .ansatz import BubbleParams, delta_of, project_W_exact, project_Z, residual_R
from .reduced import ReducedZero, brouwer_degree, classify, eval_F, eval_J, find_zeros

__all__ = [
    "EXAMPLE", "CONSTANT", "PotentialCoeffs", "check_hypotheses", "eval_V", "eval_V_half",
    "BubbleParams", "delta_of", "project_W_exact", "project_Z", "residual_R",
    "ReducedZero", "brouwer_degree", "classify", "eval_F", "eval_J", "find_zeros",
]
