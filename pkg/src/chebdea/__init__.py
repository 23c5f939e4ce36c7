"""Chebyshev-distance DEA with two-stage analysis and category separation."""

from .lp import (
    LpProblem,
    LpSolution,
    LpStatus,
    SimplexOptions,
    solve_lp,
)

__all__ = [
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "SimplexOptions",
    "solve_lp",
]

__version__ = "0.1.0"
